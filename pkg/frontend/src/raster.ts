/** Minimal RGB raster surface with lines, markers and bitmap text. */

import { GLYPH_ADVANCE, GLYPH_HEIGHT, GLYPH_WIDTH, glyph } from './font';

export type Color = [number, number, number];

export class Raster {
  readonly data: Uint8Array;

  constructor(readonly width: number, readonly height: number,
              background: Color = [255, 255, 255]) {
    this.data = new Uint8Array(width * height * 3);
    for (let i = 0; i < width * height; i++) {
      this.data[3 * i] = background[0];
      this.data[3 * i + 1] = background[1];
      this.data[3 * i + 2] = background[2];
    }
  }

  set(x: number, y: number, color: Color): void {
    x = Math.round(x);
    y = Math.round(y);
    if (x < 0 || y < 0 || x >= this.width || y >= this.height) return;
    const i = 3 * (y * this.width + x);
    this.data[i] = color[0];
    this.data[i + 1] = color[1];
    this.data[i + 2] = color[2];
  }

  line(x0: number, y0: number, x1: number, y1: number, color: Color,
       dash: number = 0): void {
    // Bresenham walk; dash > 0 alternates dash-length runs on and off
    let x = Math.round(x0);
    let y = Math.round(y0);
    const xe = Math.round(x1);
    const ye = Math.round(y1);
    const dx = Math.abs(xe - x);
    const dy = -Math.abs(ye - y);
    const sx = x < xe ? 1 : -1;
    const sy = y < ye ? 1 : -1;
    let err = dx + dy;
    let step = 0;
    for (;;) {
      if (dash === 0 || Math.floor(step / dash) % 2 === 0) {
        this.set(x, y, color);
      }
      if (x === xe && y === ye) break;
      const e2 = 2 * err;
      if (e2 >= dy) { err += dy; x += sx; }
      if (e2 <= dx) { err += dx; y += sy; }
      step++;
    }
  }

  fillRect(x: number, y: number, w: number, h: number, color: Color): void {
    for (let j = 0; j < h; j++) {
      for (let i = 0; i < w; i++) {
        this.set(x + i, y + j, color);
      }
    }
  }

  /** Filled square marker centered at (x, y). */
  marker(x: number, y: number, size: number, color: Color): void {
    const half = Math.floor(size / 2);
    this.fillRect(Math.round(x) - half, Math.round(y) - half, size, size, color);
  }

  /** Open circle, used to flag graph-refinement steps. */
  circle(x: number, y: number, radius: number, color: Color): void {
    const steps = Math.max(16, Math.round(8 * radius));
    for (let s = 0; s < steps; s++) {
      const a = (2 * Math.PI * s) / steps;
      this.set(x + radius * Math.cos(a), y + radius * Math.sin(a), color);
    }
  }

  text(x: number, y: number, value: string, color: Color): void {
    let cx = Math.round(x);
    for (const ch of value) {
      const rows = glyph(ch);
      for (let j = 0; j < GLYPH_HEIGHT; j++) {
        for (let i = 0; i < GLYPH_WIDTH; i++) {
          if (rows[j][i] === '1') this.set(cx + i, y + j, color);
        }
      }
      cx += GLYPH_ADVANCE;
    }
  }

  /** Text rotated 90 degrees counterclockwise (for the y-axis label). */
  textVertical(x: number, y: number, value: string, color: Color): void {
    let cy = Math.round(y);
    for (const ch of value) {
      const rows = glyph(ch);
      for (let j = 0; j < GLYPH_HEIGHT; j++) {
        for (let i = 0; i < GLYPH_WIDTH; i++) {
          if (rows[j][i] === '1') this.set(x + j, cy - i, color);
        }
      }
      cy -= GLYPH_ADVANCE;
    }
  }
}
