/** Minimal raster figure drawing on top of pngjs: axes, polylines, markers
 * and a 5x7 bitmap font. No native canvas dependency.
 */

import * as fs from "fs";
import { PNG } from "pngjs";

export type Color = [number, number, number];

export const BLACK: Color = [0, 0, 0];
export const GRAY: Color = [170, 170, 170];
export const BLUE: Color = [31, 90, 166];
export const ORANGE: Color = [217, 95, 2];
export const GREEN: Color = [27, 138, 90];

// 5x7 glyphs, one number per row (5 LSBs used).
const GLYPHS: Record<string, number[]> = {
    "0": [14, 17, 19, 21, 25, 17, 14], "1": [4, 12, 4, 4, 4, 4, 14],
    "2": [14, 17, 1, 2, 4, 8, 31], "3": [14, 17, 1, 6, 1, 17, 14],
    "4": [2, 6, 10, 18, 31, 2, 2], "5": [31, 16, 30, 1, 1, 17, 14],
    "6": [6, 8, 16, 30, 17, 17, 14], "7": [31, 1, 2, 4, 8, 8, 8],
    "8": [14, 17, 17, 14, 17, 17, 14], "9": [14, 17, 17, 15, 1, 2, 12],
    "-": [0, 0, 0, 14, 0, 0, 0], "+": [0, 4, 4, 31, 4, 4, 0],
    ".": [0, 0, 0, 0, 0, 12, 12], ",": [0, 0, 0, 0, 4, 4, 8],
    "e": [0, 0, 14, 17, 31, 16, 14], "E": [31, 16, 16, 30, 16, 16, 31],
    "(": [2, 4, 8, 8, 8, 4, 2], ")": [8, 4, 2, 2, 2, 4, 8],
    "_": [0, 0, 0, 0, 0, 0, 31], " ": [0, 0, 0, 0, 0, 0, 0],
    "=": [0, 0, 31, 0, 31, 0, 0], "/": [1, 1, 2, 4, 8, 16, 16],
    ":": [0, 12, 12, 0, 12, 12, 0],
    a: [0, 0, 14, 1, 15, 17, 15], b: [16, 16, 30, 17, 17, 17, 30],
    c: [0, 0, 15, 16, 16, 16, 15], d: [1, 1, 15, 17, 17, 17, 15],
    f: [6, 8, 28, 8, 8, 8, 8], g: [0, 15, 17, 17, 15, 1, 14],
    h: [16, 16, 30, 17, 17, 17, 17], i: [4, 0, 12, 4, 4, 4, 14],
    l: [12, 4, 4, 4, 4, 4, 14], m: [0, 0, 26, 21, 21, 21, 21],
    n: [0, 0, 30, 17, 17, 17, 17], o: [0, 0, 14, 17, 17, 17, 14],
    p: [0, 0, 30, 17, 30, 16, 16], r: [0, 0, 22, 24, 16, 16, 16],
    s: [0, 0, 15, 16, 14, 1, 30], t: [8, 8, 28, 8, 8, 8, 6],
    u: [0, 0, 17, 17, 17, 17, 15], v: [0, 0, 17, 17, 17, 10, 4],
    w: [0, 0, 21, 21, 21, 21, 10], x: [0, 0, 17, 10, 4, 10, 17],
    y: [0, 17, 17, 15, 1, 2, 12], z: [0, 0, 31, 2, 4, 8, 31],
    k: [16, 16, 17, 18, 28, 18, 17], q: [0, 15, 17, 17, 15, 1, 1],
    j: [2, 0, 6, 2, 2, 18, 12], B: [30, 17, 17, 30, 17, 17, 30],
    D: [30, 17, 17, 17, 17, 17, 30], G: [14, 17, 16, 23, 17, 17, 15],
    Q: [14, 17, 17, 17, 21, 18, 13], H: [17, 17, 17, 31, 17, 17, 17],
    M: [17, 27, 21, 21, 17, 17, 17],
};

export class Figure {
    readonly png: PNG;
    readonly width: number;
    readonly height: number;

    constructor(width = 900, height = 480) {
        this.width = width;
        this.height = height;
        this.png = new PNG({ width, height });
        this.png.data.fill(255);
    }

    setPixel(x: number, y: number, c: Color): void {
        x = Math.round(x);
        y = Math.round(y);
        if (x < 0 || y < 0 || x >= this.width || y >= this.height) return;
        const idx = (this.width * y + x) << 2;
        this.png.data[idx] = c[0];
        this.png.data[idx + 1] = c[1];
        this.png.data[idx + 2] = c[2];
        this.png.data[idx + 3] = 255;
    }

    line(x0: number, y0: number, x1: number, y1: number, c: Color): void {
        // DDA; fine for axis-aligned and data polylines alike.
        const dx = x1 - x0;
        const dy = y1 - y0;
        const steps = Math.max(Math.abs(dx), Math.abs(dy), 1);
        for (let i = 0; i <= steps; i++) {
            this.setPixel(x0 + (dx * i) / steps, y0 + (dy * i) / steps, c);
        }
    }

    marker(x: number, y: number, c: Color, half = 2): void {
        for (let dx = -half; dx <= half; dx++) {
            for (let dy = -half; dy <= half; dy++) {
                this.setPixel(x + dx, y + dy, c);
            }
        }
    }

    text(x: number, y: number, s: string, c: Color): void {
        let cx = x;
        for (const ch of s) {
            const glyph = GLYPHS[ch] ?? GLYPHS[ch.toLowerCase()] ?? GLYPHS[" "];
            for (let row = 0; row < 7; row++) {
                for (let col = 0; col < 5; col++) {
                    if ((glyph[row] >> (4 - col)) & 1) {
                        this.setPixel(cx + col, y + row, c);
                    }
                }
            }
            cx += 6;
        }
    }

    write(path: string): void {
        fs.writeFileSync(path, PNG.sync.write(this.png));
    }
}

export interface Axes {
    x0: number;
    y0: number;
    x1: number;
    y1: number;
    tMin: number;
    tMax: number;
    vMin: number;
    vMax: number;
}

function fmt(v: number): string {
    if (v === 0) return "0";
    const a = Math.abs(v);
    if (a >= 0.01 && a < 10000) return v.toPrecision(4).replace(/\.?0+$/, "");
    return v.toExponential(2);
}

/** Frame plus ticks; returns the mapping region for data space -> pixels. */
export function drawAxes(
    fig: Figure,
    title: string,
    tMin: number,
    tMax: number,
    vMin: number,
    vMax: number,
): Axes {
    if (vMax - vMin < 1e-300) {
        const pad = Math.abs(vMax) * 1e-6 + 1e-9;
        vMin -= pad;
        vMax += pad;
    }
    const ax: Axes = { x0: 70, y0: 30, x1: fig.width - 20, y1: fig.height - 40, tMin, tMax, vMin, vMax };
    fig.text(ax.x0, 12, title, BLACK);
    fig.line(ax.x0, ax.y0, ax.x0, ax.y1, BLACK);
    fig.line(ax.x0, ax.y1, ax.x1, ax.y1, BLACK);
    for (let k = 0; k <= 5; k++) {
        const t = tMin + ((tMax - tMin) * k) / 5;
        const x = ax.x0 + ((ax.x1 - ax.x0) * k) / 5;
        fig.line(x, ax.y1, x, ax.y1 + 4, BLACK);
        fig.text(x - 12, ax.y1 + 8, fmt(t), BLACK);
        const v = vMin + ((vMax - vMin) * k) / 5;
        const y = ax.y1 - ((ax.y1 - ax.y0) * k) / 5;
        fig.line(ax.x0 - 4, y, ax.x0, y, BLACK);
        fig.text(4, y - 3, fmt(v), BLACK);
    }
    return ax;
}

export function toPixel(ax: Axes, t: number, v: number): [number, number] {
    const x = ax.x0 + ((t - ax.tMin) / (ax.tMax - ax.tMin)) * (ax.x1 - ax.x0);
    const y = ax.y1 - ((v - ax.vMin) / (ax.vMax - ax.vMin)) * (ax.y1 - ax.y0);
    return [x, y];
}

export function polyline(
    fig: Figure,
    ax: Axes,
    times: ArrayLike<number>,
    values: ArrayLike<number>,
    c: Color,
    mask?: (i: number) => boolean,
): void {
    let prev: [number, number] | null = null;
    for (let i = 0; i < times.length; i++) {
        if ((mask && !mask(i)) || Number.isNaN(values[i])) {
            prev = null;
            continue;
        }
        const pt = toPixel(ax, times[i], values[i]);
        if (prev !== null) {
            fig.line(prev[0], prev[1], pt[0], pt[1], c);
        }
        prev = pt;
    }
}
