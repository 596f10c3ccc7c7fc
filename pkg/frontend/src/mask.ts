/**
 * Mask editing model.
 *
 * The mask is a flat Uint8Array (1 = known pixel, 0 = hole), the same
 * convention the inpainting service uses. All painting is hard-edged —
 * pixels are set directly rather than drawn through an antialiased canvas
 * path — so the exported mask is strictly binary by construction.
 */

export interface Point {
  x: number;
  y: number;
}

export const KNOWN = 1;
export const HOLE = 0;

/** Hole-ratio bins; half-open except the top bin which is closed at 0.5. */
export const BIN_EDGES: ReadonlyArray<[string, number, number]> = [
  ["10-20", 0.1, 0.2],
  ["20-30", 0.2, 0.3],
  ["30-40", 0.3, 0.4],
  ["40-50", 0.4, 0.5],
];

export function classifyRatio(ratio: number): string {
  if (ratio >= 0.4 && ratio <= 0.5) return "40-50";
  for (const [name, lo, hi] of BIN_EDGES) {
    if (ratio >= lo && ratio < hi) return name;
  }
  return "other";
}

export class MaskLayer {
  readonly width: number;
  readonly height: number;
  data: Uint8Array;
  private history: Uint8Array[] = [];
  private holeCount = 0;

  constructor(width: number, height: number) {
    if (width <= 0 || height <= 0) throw new Error(`bad mask size ${width}x${height}`);
    this.width = width;
    this.height = height;
    this.data = new Uint8Array(width * height).fill(KNOWN);
  }

  holeRatio(): number {
    return this.holeCount / (this.width * this.height);
  }

  bin(): string {
    return classifyRatio(this.holeRatio());
  }

  historyDepth(): number {
    return this.history.length;
  }

  private pushHistory(): void {
    this.history.push(this.data.slice());
  }

  /** Restore the layer to the state before the last stroke/rect/clear. */
  undo(): boolean {
    const prev = this.history.pop();
    if (!prev) return false;
    this.data = prev;
    this.recount();
    return true;
  }

  clear(): void {
    this.pushHistory();
    this.data.fill(KNOWN);
    this.holeCount = 0;
  }

  private recount(): void {
    let holes = 0;
    for (let i = 0; i < this.data.length; i++) if (this.data[i] === HOLE) holes++;
    this.holeCount = holes;
  }

  private setHole(x: number, y: number): void {
    if (x < 0 || y < 0 || x >= this.width || y >= this.height) return;
    const idx = y * this.width + x;
    if (this.data[idx] !== HOLE) {
      this.data[idx] = HOLE;
      this.holeCount++;
    }
  }

  private stampDisc(cx: number, cy: number, radius: number): void {
    const r2 = radius * radius;
    const x0 = Math.max(0, Math.floor(cx - radius));
    const x1 = Math.min(this.width - 1, Math.ceil(cx + radius));
    const y0 = Math.max(0, Math.floor(cy - radius));
    const y1 = Math.min(this.height - 1, Math.ceil(cy + radius));
    for (let y = y0; y <= y1; y++) {
      for (let x = x0; x <= x1; x++) {
        const dx = x - cx;
        const dy = y - cy;
        if (dx * dx + dy * dy <= r2) this.setHole(x, y);
      }
    }
  }

  /**
   * Rasterize a brush stroke: discs stamped along each path segment.
   * A zero-length path is a no-op (no history entry either).
   */
  paintStroke(path: Point[], brushPx: number): void {
    if (path.length === 0 || brushPx <= 0) return;
    this.pushHistory();
    const radius = brushPx / 2;
    let prev = path[0];
    this.stampDisc(prev.x, prev.y, radius);
    for (let i = 1; i < path.length; i++) {
      const next = path[i];
      const dist = Math.hypot(next.x - prev.x, next.y - prev.y);
      const steps = Math.max(1, Math.ceil(dist));
      for (let s = 1; s <= steps; s++) {
        const t = s / steps;
        this.stampDisc(prev.x + (next.x - prev.x) * t, prev.y + (next.y - prev.y) * t, radius);
      }
      prev = next;
    }
  }

  /** Axis-aligned rectangular hole (the block-mask tool). */
  paintRect(a: Point, b: Point): void {
    this.pushHistory();
    const x0 = Math.max(0, Math.min(Math.round(a.x), Math.round(b.x)));
    const x1 = Math.min(this.width - 1, Math.max(Math.round(a.x), Math.round(b.x)));
    const y0 = Math.max(0, Math.min(Math.round(a.y), Math.round(b.y)));
    const y1 = Math.min(this.height - 1, Math.max(Math.round(a.y), Math.round(b.y)));
    for (let y = y0; y <= y1; y++) {
      for (let x = x0; x <= x1; x++) this.setHole(x, y);
    }
  }

  /** RGBA pixels for canvas display: holes red-tinted, known transparent. */
  toOverlayRgba(): Uint8ClampedArray<ArrayBuffer> {
    const rgba = new Uint8ClampedArray(this.width * this.height * 4);
    for (let i = 0; i < this.data.length; i++) {
      if (this.data[i] === HOLE) {
        rgba[i * 4] = 255;
        rgba[i * 4 + 3] = 140;
      }
    }
    return rgba;
  }

  /** Grayscale RGBA for PNG export: 255 = known, 0 = hole, alpha opaque. */
  toExportRgba(): Uint8ClampedArray<ArrayBuffer> {
    const rgba = new Uint8ClampedArray(this.width * this.height * 4);
    for (let i = 0; i < this.data.length; i++) {
      const v = this.data[i] === KNOWN ? 255 : 0;
      rgba[i * 4] = v;
      rgba[i * 4 + 1] = v;
      rgba[i * 4 + 2] = v;
      rgba[i * 4 + 3] = 255;
    }
    return rgba;
  }

  /** Rebuild a layer from exported RGBA (>= 128 counts as known). */
  static fromExportRgba(rgba: Uint8ClampedArray | Uint8Array, width: number, height: number): MaskLayer {
    if (rgba.length !== width * height * 4) {
      throw new Error(`rgba length ${rgba.length} does not match ${width}x${height}`);
    }
    const layer = new MaskLayer(width, height);
    let holes = 0;
    for (let i = 0; i < width * height; i++) {
      const known = rgba[i * 4] >= 128;
      layer.data[i] = known ? KNOWN : HOLE;
      if (!known) holes++;
    }
    layer["holeCount"] = holes;
    return layer;
  }

  /** Every exported value must be exactly 0 or 255. */
  isBinaryExport(rgba: Uint8ClampedArray): boolean {
    for (let i = 0; i < this.width * this.height; i++) {
      const v = rgba[i * 4];
      if (v !== 0 && v !== 255) return false;
      if (rgba[i * 4 + 1] !== v || rgba[i * 4 + 2] !== v) return false;
    }
    return true;
  }
}
