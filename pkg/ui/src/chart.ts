/**
 * Strip chart: a fixed-capacity ring buffer of (time, value) points per
 * series, plus a canvas renderer.  The data side is plain arithmetic so
 * it can be tested without a DOM.
 */

export interface Point {
  t: number;
  v: number;
}

export class Series {
  private buf: Point[];
  private head = 0; // index of the oldest point
  private count = 0;

  constructor(public readonly name: string,
              public readonly capacity: number) {
    if (capacity < 1) throw new Error("capacity must be >= 1");
    this.buf = new Array(capacity);
  }

  get length(): number {
    return this.count;
  }

  push(t: number, v: number): void {
    const i = (this.head + this.count) % this.capacity;
    this.buf[i] = { t, v };
    if (this.count < this.capacity) {
      this.count += 1;
    } else {
      this.head = (this.head + 1) % this.capacity;
    }
  }

  /** Points oldest-first. */
  points(): Point[] {
    const out: Point[] = [];
    for (let k = 0; k < this.count; k++) {
      out.push(this.buf[(this.head + k) % this.capacity]);
    }
    return out;
  }

  /** [min, max] over the buffered values, or null when empty. */
  valueRange(): [number, number] | null {
    if (this.count === 0) return null;
    let lo = Infinity;
    let hi = -Infinity;
    for (const p of this.points()) {
      if (p.v < lo) lo = p.v;
      if (p.v > hi) hi = p.v;
    }
    return [lo, hi];
  }
}

const COLORS = ["#2b6cb0", "#c05621", "#2f855a", "#975a16", "#6b46c1"];

export class StripChart {
  private series = new Map<string, Series>();

  constructor(private readonly capacity = 600) {}

  push(name: string, t: number, v: number): void {
    let s = this.series.get(name);
    if (s === undefined) {
      s = new Series(name, this.capacity);
      this.series.set(name, s);
    }
    s.push(t, v);
  }

  get(name: string): Series | undefined {
    return this.series.get(name);
  }

  names(): string[] {
    return Array.from(this.series.keys());
  }

  /** Common [tMin, tMax, vMin, vMax] across all series, padded a little. */
  bounds(): [number, number, number, number] | null {
    let tLo = Infinity, tHi = -Infinity, vLo = Infinity, vHi = -Infinity;
    for (const s of this.series.values()) {
      for (const p of s.points()) {
        if (p.t < tLo) tLo = p.t;
        if (p.t > tHi) tHi = p.t;
        if (p.v < vLo) vLo = p.v;
        if (p.v > vHi) vHi = p.v;
      }
    }
    if (tLo === Infinity) return null;
    if (tHi === tLo) tHi = tLo + 1;
    const pad = (vHi - vLo || 1) * 0.1;
    return [tLo, tHi, vLo - pad, vHi + pad];
  }

  render(canvas: HTMLCanvasElement): void {
    const ctx = canvas.getContext("2d");
    if (ctx === null) return;
    const { width: w, height: h } = canvas;
    ctx.clearRect(0, 0, w, h);
    const b = this.bounds();
    if (b === null) return;
    const [tLo, tHi, vLo, vHi] = b;
    const x = (t: number) => ((t - tLo) / (tHi - tLo)) * (w - 10) + 5;
    const y = (v: number) => h - 5 - ((v - vLo) / (vHi - vLo)) * (h - 10);

    let c = 0;
    ctx.font = "12px sans-serif";
    for (const s of this.series.values()) {
      const color = COLORS[c % COLORS.length];
      ctx.strokeStyle = color;
      ctx.beginPath();
      s.points().forEach((p, i) => {
        if (i === 0) ctx.moveTo(x(p.t), y(p.v));
        else ctx.lineTo(x(p.t), y(p.v));
      });
      ctx.stroke();
      ctx.fillStyle = color;
      ctx.fillText(s.name, 8, 16 + 14 * c);
      c += 1;
    }
  }
}
