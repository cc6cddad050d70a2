/** Rasterize a chart model into a PNG buffer. */

import { PNG } from 'pngjs';
import { ChartModel, decadeTicks, tickLabel } from './chart';
import { Color, Raster } from './raster';
import { textWidth } from './font';

const BLACK: Color = [0, 0, 0];
const GREY: Color = [200, 200, 200];

export interface RenderOptions {
  width?: number;
  height?: number;
}

export function renderChart(model: ChartModel,
                            options: RenderOptions = {}): Buffer {
  const width = options.width ?? 800;
  const height = options.height ?? 560;
  const margin = { left: 78, right: 24, top: 40, bottom: 56 };
  const raster = new Raster(width, height);

  const plotW = width - margin.left - margin.right;
  const plotH = height - margin.top - margin.bottom;
  raster.text(margin.left, 14, 'indicators vs dofs (log-log)', BLACK);

  if (model.xDomain === null || model.yDomain === null) {
    let y = margin.top + 20;
    for (const note of model.annotations) {
      raster.text(margin.left, y, note, BLACK);
      y += 14;
    }
    return encode(raster);
  }

  const [x0, x1] = model.xDomain;
  const [y0, y1] = model.yDomain;
  const sx = (v: number) => margin.left + ((Math.log10(v) - x0) / (x1 - x0)) * plotW;
  const sy = (v: number) =>
    margin.top + plotH - ((Math.log10(v) - y0) / (y1 - y0)) * plotH;

  // frame and decade grid
  for (const t of decadeTicks(model.xDomain)) {
    const px = margin.left + ((t - x0) / (x1 - x0)) * plotW;
    raster.line(px, margin.top, px, margin.top + plotH, GREY);
    const label = tickLabel(t);
    raster.text(px - textWidth(label) / 2, margin.top + plotH + 8, label, BLACK);
  }
  for (const t of decadeTicks(model.yDomain)) {
    const py = margin.top + plotH - ((t - y0) / (y1 - y0)) * plotH;
    raster.line(margin.left, py, margin.left + plotW, py, GREY);
    const label = tickLabel(t);
    raster.text(margin.left - textWidth(label) - 6, py - 3, label, BLACK);
  }
  raster.line(margin.left, margin.top, margin.left, margin.top + plotH, BLACK);
  raster.line(margin.left, margin.top + plotH, margin.left + plotW,
              margin.top + plotH, BLACK);
  raster.text(margin.left + plotW / 2 - textWidth('dofs') / 2,
              height - 16, 'dofs', BLACK);
  raster.textVertical(16, margin.top + plotH / 2 + 30, 'indicator', BLACK);

  // series: polyline + square markers, graph steps circled
  for (const series of model.series) {
    const pts = series.points.map((p) => ({
      x: sx(p.x), y: sy(p.y), graphStep: p.graphStep,
    }));
    for (let i = 1; i < pts.length; i++) {
      raster.line(pts[i - 1].x, pts[i - 1].y, pts[i].x, pts[i].y, series.color);
    }
    for (const p of pts) {
      raster.marker(p.x, p.y, 5, series.color);
      if (p.graphStep) {
        raster.circle(p.x, p.y, 6, BLACK);
      }
    }
  }

  // legend (one entry per series)
  let ly = margin.top + 6;
  for (const series of model.series) {
    raster.fillRect(margin.left + plotW - 86, ly, 10, 10, series.color);
    raster.text(margin.left + plotW - 72, ly + 1, series.name, BLACK);
    ly += 16;
  }

  // annotations (slope fit, graph-refinement note)
  let ay = margin.top + 6;
  for (const note of model.annotations) {
    raster.text(margin.left + 8, ay, note, BLACK);
    ay += 14;
  }
  return encode(raster);
}

function encode(raster: Raster): Buffer {
  const png = new PNG({ width: raster.width, height: raster.height });
  for (let i = 0; i < raster.width * raster.height; i++) {
    png.data[4 * i] = raster.data[3 * i];
    png.data[4 * i + 1] = raster.data[3 * i + 1];
    png.data[4 * i + 2] = raster.data[3 * i + 2];
    png.data[4 * i + 3] = 255;
  }
  return PNG.sync.write(png);
}
