__title__ = 'signmap'
__description__ = 'Offline placard mapping from RGB-D keyframes'
__url__ = 'https://github.com/signmap/signmap'
__version__ = '0.1'
__author__ = 'signmap developers'
__author_email__ = 'signmap@example.org'
__license__ = 'MIT'
__copyright__ = 'Copyright 2026 signmap developers'
