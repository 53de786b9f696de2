import init, { kappa_sweep, spectrum, gd_trace } from "./pkg/gram_spectra_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
const PAD = 40;

function axes(ctx, w, h) {
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#888";
  ctx.beginPath();
  ctx.moveTo(PAD, 10);
  ctx.lineTo(PAD, h - PAD);
  ctx.lineTo(w - 10, h - PAD);
  ctx.stroke();
  ctx.fillStyle = "#444";
  ctx.font = "11px sans-serif";
}

function scale(lo, hi, a, b) {
  const span = hi - lo || 1;
  return (v) => a + ((v - lo) / span) * (b - a);
}

function guarded(id, f) {
  $(id).addEventListener("click", () => {
    try {
      f();
    } catch (e) {
      alert(e.message ?? e);
    }
  });
}

function drawSweep() {
  const n = num("sw-n");
  const gammas = [];
  for (let g = 0.25; g <= 3.0001; g += 0.125) gammas.push(Number(g.toFixed(3)));
  const v = kappa_sweep(n, Float64Array.from(gammas), num("sw-trials"), num("sw-seed"));
  const pts = [];
  for (let i = 0; i < v.length; i += 3) pts.push({ g: v[i], m: v[i + 1], se: v[i + 2] });
  const c = $("sw-plot"), ctx = c.getContext("2d");
  axes(ctx, c.width, c.height);
  const ys = pts.flatMap((p) => [p.m - 2 * p.se, p.m + 2 * p.se]).filter((y) => y > 0);
  const x = scale(pts[0].g, pts[pts.length - 1].g, PAD, c.width - 10);
  const y = scale(Math.log10(Math.min(...ys)), Math.log10(Math.max(...ys)), c.height - PAD, 10);
  ctx.strokeStyle = "#36c";
  ctx.beginPath();
  pts.forEach((p, i) => (i ? ctx.lineTo : ctx.moveTo).call(ctx, x(p.g), y(Math.log10(p.m))));
  ctx.stroke();
  ctx.strokeStyle = "#9bd";
  for (const p of pts) {
    ctx.beginPath();
    ctx.moveTo(x(p.g), y(Math.log10(Math.max(p.m - 2 * p.se, Math.min(...ys)))));
    ctx.lineTo(x(p.g), y(Math.log10(p.m + 2 * p.se)));
    ctx.stroke();
  }
  for (const g of [0.5, 1, 2, 3]) ctx.fillText(String(g), x(g) - 6, c.height - PAD + 14);
  ctx.fillText("γ", c.width - 20, c.height - 8);
  ctx.fillText(Math.max(...ys).toPrecision(3), 2, 16);
  ctx.fillText(Math.min(...ys).toPrecision(3), 2, c.height - PAD);
}

function drawSpectrum() {
  const v = spectrum(num("sp-n"), num("sp-p"), num("sp-seed"));
  const [lo, hi] = [v[v.length - 2], v[v.length - 1]];
  const s = Array.from(v.slice(0, -2));
  const top = Math.max(hi, ...s) * 1.05;
  const bins = 40, counts = new Array(bins).fill(0);
  for (const x of s) counts[Math.min(bins - 1, Math.floor((x / top) * bins))]++;
  const c = $("sp-plot"), ctx = c.getContext("2d");
  axes(ctx, c.width, c.height);
  const x = scale(0, top, PAD, c.width - 10);
  const y = scale(0, Math.max(...counts), c.height - PAD, 10);
  ctx.fillStyle = "#36c";
  counts.forEach((k, i) => {
    const x0 = x((i * top) / bins), x1 = x(((i + 1) * top) / bins);
    ctx.fillRect(x0 + 1, y(k), x1 - x0 - 2, c.height - PAD - y(k));
  });
  ctx.strokeStyle = "#c33";
  for (const e of [lo, hi]) {
    ctx.beginPath();
    ctx.moveTo(x(e), 10);
    ctx.lineTo(x(e), c.height - PAD);
    ctx.stroke();
  }
  ctx.fillStyle = "#444";
  for (let t = 0; t <= top; t += 0.5) ctx.fillText(t.toFixed(1), x(t) - 8, c.height - PAD + 14);
}

function drawGd() {
  const eps = Number($("gd-eps").value);
  const v = gd_trace(num("gd-n"), num("gd-p"), eps, 1000000, num("gd-seed"));
  const c = $("gd-plot"), ctx = c.getContext("2d");
  axes(ctx, c.width, c.height);
  const floor = Math.min(eps, ...v.filter((g) => g > 0)) / 10;
  const x = scale(0, v.length - 1, PAD, c.width - 10);
  const y = scale(Math.log10(floor), 0, c.height - PAD, 10);
  ctx.strokeStyle = "#36c";
  ctx.beginPath();
  v.forEach((g, t) => (t ? ctx.lineTo : ctx.moveTo).call(ctx, x(t), y(Math.log10(Math.max(g, floor)))));
  ctx.stroke();
  ctx.strokeStyle = "#c33";
  ctx.beginPath();
  ctx.moveTo(PAD, y(Math.log10(eps)));
  ctx.lineTo(c.width - 10, y(Math.log10(eps)));
  ctx.stroke();
  ctx.fillStyle = "#444";
  ctx.fillText("1", 2, 16);
  ctx.fillText(floor.toExponential(0), 2, c.height - PAD);
  ctx.fillText(String(v.length - 1), c.width - 40, c.height - PAD + 14);
  $("gd-info").textContent = `${v.length - 1} iterations to reach gap ≤ ε·gap₀ (log scale).`;
}

await init();
guarded("sw-run", drawSweep);
guarded("sp-run", drawSpectrum);
guarded("gd-run", drawGd);
drawSweep();
drawSpectrum();
drawGd();
