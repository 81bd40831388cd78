"""Regenerates the built-in glyph atlas shipped in crates/core/assets.

The sheet is a 1-bit PNG (ink = black) and the sidecar has one
tab-separated line per glyph: character, x, y, w, h, advance.
"""
import sys
from PIL import Image, ImageDraw, ImageFont

FONT = "/usr/share/fonts/truetype/dejavu/DejaVuSans.ttf"
SIZE = 28
COLS = 16


def main(out_png, out_txt):
    font = ImageFont.truetype(FONT, SIZE)
    ascent, descent = font.getmetrics()
    cell_h = ascent + descent
    chars = [chr(c) for c in range(0x20, 0x7F)]
    advances = [max(1, round(font.getlength(c))) for c in chars]
    cell_w = max(advances) + 2
    rows = (len(chars) + COLS - 1) // COLS
    sheet = Image.new("L", (COLS * cell_w, rows * cell_h), 255)
    draw = ImageDraw.Draw(sheet)
    lines = []
    for i, (c, adv) in enumerate(zip(chars, advances)):
        x = (i % COLS) * cell_w
        y = (i // COLS) * cell_h
        glyph = Image.new("L", (adv, cell_h), 255)
        ImageDraw.Draw(glyph).text((0, 0), c, font=font, fill=0)
        glyph = glyph.point(lambda v: 0 if v < 128 else 255)
        sheet.paste(glyph, (x, y))
        lines.append(f"{c}\t{x}\t{y}\t{adv}\t{cell_h}\t{adv}")
    sheet.convert("1").save(out_png, optimize=True)
    with open(out_txt, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
