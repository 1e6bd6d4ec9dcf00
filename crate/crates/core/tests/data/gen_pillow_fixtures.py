"""Regenerates the reference-encoder JPEG files used by the DQT tests.

Requires Pillow. Writes:
  q50_gray.jpg       - a 16x16 grayscale file saved at quality 50
  q75_color.jpg      - a 16x16 colour file (two DQT tables) saved at quality 75
"""
import os

from PIL import Image

HERE = os.path.dirname(os.path.abspath(__file__))


def main():
    gray = Image.new("L", (16, 16))
    gray.putdata([(x * 13 + y * 7) % 256 for y in range(16) for x in range(16)])
    gray.save(os.path.join(HERE, "q50_gray.jpg"), format="JPEG", quality=50)

    color = Image.new("RGB", (16, 16))
    color.putdata([((x * 16) % 256, (y * 16) % 256, 128) for y in range(16) for x in range(16)])
    color.save(os.path.join(HERE, "q75_color.jpg"), format="JPEG", quality=75)


if __name__ == "__main__":
    main()
