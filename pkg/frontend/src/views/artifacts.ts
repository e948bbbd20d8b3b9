/** Per-job artifact browser with inline CSV and plain-PGM previews. */

import { esc } from "../render";
import type { JobDetail } from "../types";

export function renderJobDetail(job: JobDetail): string {
  const artifacts = Object.entries(job.artifacts)
    .map(([name, meta]) => `<li>
  <a href="#" data-artifact="${esc(name)}"><code>${esc(name)}</code></a> ${meta.size} bytes
  <span class="hash" title="${esc(meta.hash)}">${esc(meta.hash.slice(0, 12))}</span>
</li>`)
    .join("\n");
  return `<section class="panel"><h2>Job ${esc(job.id)}</h2>
<p>node <strong>${esc(job.node)}</strong>${job.coord.length ? ` coord ${esc(JSON.stringify(job.coord))}` : ""},
state <span class="state-${esc(job.state)}">${esc(job.state)}</span>,
attempt ${job.attempt}, backend ${esc(job.backend ?? "-")}${
    job.exit_code !== null ? `, exit ${job.exit_code}` : ""}</p>
<p>
  <a href="#/jobs/${esc(job.id)}/stdout">stdout</a>
  <a href="#/jobs/${esc(job.id)}/stderr">stderr</a>
</p>
<h3>Artifacts</h3>
<ul class="artifacts">
${artifacts || "<li class='empty'>none staged</li>"}
</ul>
<div id="preview"></div>
</section>`;
}

/** First rows of a one-header CSV as an HTML table. */
export function renderCsvPreview(text: string, maxRows = 25): string {
  const lines = text.trim().split("\n");
  if (lines.length < 1) return "<p class='empty'>empty file</p>";
  const header = lines[0].split(",");
  const rows = lines.slice(1, 1 + maxRows).map(
    (l) => `<tr>${l.split(",").map((c) => `<td>${esc(c)}</td>`).join("")}</tr>`);
  const more = lines.length - 1 > maxRows ? `<p>... ${lines.length - 1 - maxRows} more rows</p>` : "";
  return `<table class="csv"><thead><tr>${header
    .map((h) => `<th>${esc(h)}</th>`)
    .join("")}</tr></thead><tbody>${rows.join("")}</tbody></table>${more}`;
}

export interface PgmImage {
  width: number;
  height: number;
  maxval: number;
  pixels: number[];
}

/** Parse a plain (P2) PGM; throws on anything else. */
export function parsePgm(text: string): PgmImage {
  const tokens = text
    .split("\n")
    .filter((line) => !line.startsWith("#"))
    .join(" ")
    .trim()
    .split(/\s+/);
  if (tokens[0] !== "P2") throw new Error("not a plain PGM (P2) file");
  const [width, height, maxval] = [1, 2, 3].map((i) => parseInt(tokens[i], 10));
  const pixels = tokens.slice(4).map((t) => parseInt(t, 10));
  if (pixels.length !== width * height) {
    throw new Error(`PGM pixel count ${pixels.length} != ${width}x${height}`);
  }
  return { width, height, maxval, pixels };
}

/** Draw a parsed PGM onto a canvas element (browser-only). */
export function drawPgm(image: PgmImage, canvas: HTMLCanvasElement): void {
  canvas.width = image.width;
  canvas.height = image.height;
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const data = ctx.createImageData(image.width, image.height);
  for (let i = 0; i < image.pixels.length; i++) {
    const v = Math.round((image.pixels[i] / image.maxval) * 255);
    data.data[4 * i] = v;
    data.data[4 * i + 1] = v;
    data.data[4 * i + 2] = v;
    data.data[4 * i + 3] = 255;
  }
  ctx.putImageData(data, 0, 0);
}
