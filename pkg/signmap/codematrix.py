"""Binary code markers standing in for printed placard text.

Each text line becomes one marker: a solid black ring around a payload of
PAYLOAD_COLUMNS columns, one character per column, six data bits top to
bottom followed by an even parity bit. Black cells are ones.
"""
import cv2
import numpy as np

ALPHABET = "0123456789.ABCDEFGHIJKLMNOPQRSTUVWXYZ "
DATA_BITS = 6
PAYLOAD_COLUMNS = 10
PAYLOAD_ROWS = DATA_BITS + 1
MARKER_W = PAYLOAD_COLUMNS + 2
MARKER_H = PAYLOAD_ROWS + 2
QUIET = 1

SQUARE = "square"
CODE = "code"

def label_lines(label, width=PAYLOAD_COLUMNS):
    """Split a label into marker lines of at most `width` characters"""
    if not label:
        return []
    if len(label) <= width:
        return [label]

    lines, current = [], ""
    for word in label.split():
        if len(word) > width:
            raise ValueError("word too long for one marker: " + word)
        if not current:
            current = word
        elif len(current) + 1 + len(word) <= width:
            current += " " + word
        else:
            lines.append(current)
            current = word
    if current:
        lines.append(current)
    return lines

def encode_line(text):
    """(MARKER_H, MARKER_W) bool matrix, True is black"""
    if len(text) > PAYLOAD_COLUMNS:
        raise ValueError("line longer than {} characters: {}".format(
            PAYLOAD_COLUMNS, text))

    marker = np.ones((MARKER_H, MARKER_W), dtype=bool)
    marker[1:-1, 1:-1] = False
    for col, char in enumerate(text):
        if char not in ALPHABET:
            raise ValueError("character not encodable: " + repr(char))
        code = ALPHABET.index(char) + 1
        bits = [(code >> (DATA_BITS - 1 - b)) & 1 for b in range(DATA_BITS)]
        bits.append(sum(bits) % 2)
        marker[1:1 + PAYLOAD_ROWS, 1 + col] = np.array(bits, dtype=bool)
    return marker

def placard_cells(label, pattern=CODE, corrupt=False):
    """Cell bitmap of a placard face (True is black) with a quiet margin.

    A corrupt placard has one data bit flipped per line, so every line fails
    its parity check.
    """
    if pattern == SQUARE:
        cells = np.zeros((MARKER_W + 2 * QUIET,) * 2, dtype=bool)
        cells[3:-3, 3:-3] = True
        return cells

    lines = label_lines(label)
    height = 2 * QUIET + MARKER_H * len(lines) + max(len(lines) - 1, 0)
    width = MARKER_W + 2 * QUIET
    cells = np.zeros((max(height, width), width), dtype=bool)
    top = (cells.shape[0] - height) // 2 + QUIET
    for line in lines:
        marker = encode_line(line)
        if corrupt:
            marker[1, 1] = not marker[1, 1]
        cells[top:top + MARKER_H, QUIET:QUIET + MARKER_W] = marker
        top += MARKER_H + 1
    return cells


def _cell_means(black, x, y, w, h, nx, ny):
    """Fraction of black pixels in the central half of every grid cell"""
    means = np.zeros((ny, nx))
    for j in range(ny):
        y0 = int(np.floor(y + (j + 0.25) * h / ny))
        y1 = max(int(np.ceil(y + (j + 0.75) * h / ny)), y0 + 1)
        for i in range(nx):
            x0 = int(np.floor(x + (i + 0.25) * w / nx))
            x1 = max(int(np.ceil(x + (i + 0.75) * w / nx)), x0 + 1)
            means[j, i] = black[y0:y1, x0:x1].mean()
    return means

def _ring_ok(cells):
    ring = np.concatenate([cells[0], cells[-1], cells[1:-1, 0],
                           cells[1:-1, -1]])
    return ring.mean() >= 0.9

def find_markers(black):
    """Bounding boxes (x, y, w, h) of marker-shaped black components that do
    not touch the image border, largest first"""
    black = np.ascontiguousarray(black, dtype=np.uint8)
    height, width = black.shape
    n, _, stats, _ = cv2.connectedComponentsWithStats(black, connectivity=8)

    boxes = []
    for i in range(1, n):
        x, y, w, h, area = (int(v) for v in stats[i])
        if x == 0 or y == 0 or x + w >= width or y + h >= height:
            continue
        if w < MARKER_W or h < MARKER_H:
            continue
        aspect = (w / h) / (MARKER_W / MARKER_H)
        if not 0.7 <= aspect <= 1.4:
            continue
        cells = _cell_means(black, x, y, w, h, MARKER_W, MARKER_H) >= 0.5
        if _ring_ok(cells):
            boxes.append((area, (x, y, w, h)))
    boxes.sort(key=lambda b: (-b[0], b[1]))
    return [box for _, box in boxes]

def read_marker(black, box):
    """Decode the marker inside `box`, or None when the payload is invalid"""
    x, y, w, h = box
    cells = _cell_means(black, x, y, w, h, MARKER_W, MARKER_H) >= 0.5
    payload = cells[1:-1, 1:-1].astype(int)

    text = ""
    padding = False
    for col in range(PAYLOAD_COLUMNS):
        bits = payload[:, col]
        if bits.sum() % 2:
            return None
        code = int("".join(str(b) for b in bits[:DATA_BITS]), 2)
        if code == 0:
            padding = True
            continue
        if padding or code > len(ALPHABET):
            return None
        text += ALPHABET[code - 1]
    return text

def decode(binary):
    """Text of the first decodable marker in a binary image (0 is black)"""
    black = (np.asarray(binary) == 0).astype(np.uint8)
    for box in find_markers(black):
        text = read_marker(black, box)
        if text is not None:
            return text
    return ""
