import init, { simulate, interpolate, landscape } from "./pkg/wrom_demo.js";

const CELLS = 400;
const $ = (id) => document.getElementById(id);

function bind(id, digits) {
  const input = $(id);
  const out = $(id + "-out");
  const show = () => { out.textContent = Number(input.value).toFixed(digits); };
  show();
  input.addEventListener("input", show);
  return () => Number(input.value);
}

const mu = bind("mu", 1);
const beta = bind("beta", 2);
const years = bind("years", 1);
const yearsB = bind("years-b", 1);
const pos = bind("t", 2);
const res = bind("res", 0);

function plot(canvas, series) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  const top = Math.max(1, ...series.flatMap((s) => Array.from(s.values)));
  ctx.strokeStyle = "#eee";
  for (let k = 0; k <= 4; k++) {
    const y = h - (k / 4) * (h - 10);
    ctx.beginPath(); ctx.moveTo(0, y); ctx.lineTo(w, y); ctx.stroke();
  }
  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.lineWidth = s.width || 1.5;
    ctx.beginPath();
    s.values.forEach((v, i) => {
      const x = (i + 0.5) / s.values.length * w;
      const y = h - (v / top) * (h - 10);
      if (i === 0) ctx.moveTo(x, y); else ctx.lineTo(x, y);
    });
    ctx.stroke();
  }
}

function colour(u) {
  // dark blue (low) to yellow (high)
  const r = Math.round(255 * Math.min(1, 1.6 * u));
  const g = Math.round(255 * u);
  const b = Math.round(255 * (0.55 - 0.55 * u) + 60 * (1 - u));
  return [r, g, b];
}

function drawLandscape(canvas, data, n) {
  const raster = data.subarray(0, n * n);
  const weights = Array.from(data.subarray(n * n, n * n + 3));
  const at = data.subarray(n * n + 3);
  const finite = Array.from(raster).filter(Number.isFinite);
  const lo = Math.min(...finite);
  const hi = Math.max(...finite);
  const img = new ImageData(n, n);
  raster.forEach((v, k) => {
    if (!Number.isFinite(v)) return;
    const [r, g, b] = colour((v - lo) / (hi - lo || 1));
    img.data.set([r, g, b, 255], 4 * k);
  });
  const off = new OffscreenCanvas(n, n);
  off.getContext("2d").putImageData(img, 0, 0);
  const ctx = canvas.getContext("2d");
  ctx.imageSmoothingEnabled = false;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.drawImage(off, 0, 0, canvas.width, canvas.height);
  const px = (at[0] + 1) / 2 * canvas.width;
  const py = (1 - at[1]) / 2 * canvas.height;
  ctx.strokeStyle = "#fff";
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.moveTo(px - 6, py); ctx.lineTo(px + 6, py);
  ctx.moveTo(px, py - 6); ctx.lineTo(px, py + 6);
  ctx.stroke();
  $("weights").textContent =
    `optimal weights ${weights.map((w) => w.toFixed(3)).join(", ")}; log10 W2 from ${lo.toFixed(2)} to ${hi.toFixed(2)}`;
}

let current = null;

function updateSimulation() {
  current = simulate(mu(), beta(), years(), CELLS);
  plot($("sim"), [{ values: current, color: "#222" }]);
}

function updateInterpolation() {
  const other = simulate(mu(), beta(), yearsB(), CELLS);
  const t = pos();
  const wasserstein = interpolate(current, other, t);
  const linear = current.map((v, i) => (1 - t) * v + t * other[i]);
  plot($("interp"), [
    { values: current, color: "#999", width: 1 },
    { values: other, color: "#999", width: 1 },
    { values: linear, color: "#36c" },
    { values: wasserstein, color: "#c33", width: 2 },
  ]);
}

function updateLandscape() {
  const atoms = [0.5, 2.5, 5.0].map((t) => simulate(mu(), beta(), t, CELLS));
  const n = res();
  drawLandscape($("land"), landscape(atoms[0], atoms[1], atoms[2], current, n), n);
}

function guarded(f) {
  return () => {
    try {
      f();
      $("status").textContent = "";
    } catch (e) {
      $("status").textContent = String(e);
    }
  };
}

const all = guarded(() => { updateSimulation(); updateInterpolation(); updateLandscape(); });

await init();
for (const id of ["mu", "beta", "years"]) $(id).addEventListener("change", all);
for (const id of ["years-b", "t"]) $(id).addEventListener("input", guarded(updateInterpolation));
$("res").addEventListener("change", guarded(updateLandscape));
all();
