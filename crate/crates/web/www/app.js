import init, { solveTrace, compareMethods, locationSweep } from "./pkg/cellfree_ris_web.js";

const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];
const LABELS = {
  centralized_with_ris: "centralized",
  pd_with_ris: "distributed + RIS",
  pd_random_ris: "random RIS",
  pd_no_ris: "no RIS",
  zf_no_ris: "local ZF",
  mrt_no_ris: "local MRT",
};

const inputs = ["p_max_dbm", "user_x", "ris_elements", "num_users", "seed", "seeds"];
const status = document.getElementById("status");

function params() {
  const p = {};
  for (const id of inputs) p[id] = Number(document.getElementById(id).value);
  return JSON.stringify(p);
}

function setStatus(text, isError = false) {
  status.textContent = text;
  status.className = isError ? "error" : "";
}

function prepare(canvas) {
  const ratio = window.devicePixelRatio || 1;
  canvas.width = canvas.clientWidth * ratio;
  canvas.height = canvas.clientHeight * ratio;
  const ctx = canvas.getContext("2d");
  ctx.setTransform(ratio, 0, 0, ratio, 0, 0);
  ctx.clearRect(0, 0, canvas.clientWidth, canvas.clientHeight);
  ctx.font = "11px system-ui, sans-serif";
  return { ctx, w: canvas.clientWidth, h: canvas.clientHeight };
}

function niceRange(lo, hi) {
  if (lo === hi) return [lo - 1, hi + 1];
  const pad = 0.05 * (hi - lo);
  return [lo - pad, hi + pad];
}

// Axes with `ticks` labels on y and the given x labels.
function axes(ctx, w, h, [ylo, yhi], xTicks) {
  const m = { l: 42, r: 10, t: 10, b: 24 };
  const sx = (x, [xlo, xhi]) => m.l + ((x - xlo) / (xhi - xlo)) * (w - m.l - m.r);
  const sy = (y) => h - m.b - ((y - ylo) / (yhi - ylo)) * (h - m.t - m.b);
  ctx.strokeStyle = "#999";
  ctx.fillStyle = "#444";
  ctx.beginPath();
  ctx.moveTo(m.l, m.t);
  ctx.lineTo(m.l, h - m.b);
  ctx.lineTo(w - m.r, h - m.b);
  ctx.stroke();
  for (let i = 0; i <= 4; i++) {
    const y = ylo + ((yhi - ylo) * i) / 4;
    ctx.fillText(y.toFixed(2), 2, sy(y) + 4);
  }
  for (const [x, label, range] of xTicks) ctx.fillText(label, sx(x, range) - 6, h - 8);
  return { sx, sy, m };
}

function linePlot(canvas, series, xs) {
  const { ctx, w, h } = prepare(canvas);
  const all = series.flatMap((s) => s.y);
  const yr = niceRange(Math.min(...all), Math.max(...all));
  const xr = [xs[0], xs[xs.length - 1] === xs[0] ? xs[0] + 1 : xs[xs.length - 1]];
  const step = Math.max(1, Math.ceil(xs.length / 8));
  const ticks = xs.filter((_, i) => i % step === 0).map((x) => [x, String(x), xr]);
  const { sx, sy } = axes(ctx, w, h, yr, ticks);
  series.forEach((s, k) => {
    ctx.strokeStyle = s.color || COLORS[k % COLORS.length];
    ctx.lineWidth = 2;
    ctx.beginPath();
    s.y.forEach((y, i) => (i ? ctx.lineTo(sx(xs[i], xr), sy(y)) : ctx.moveTo(sx(xs[i], xr), sy(y))));
    ctx.stroke();
    ctx.fillStyle = ctx.strokeStyle;
    ctx.fillText(s.label, w - 130, 18 + 14 * k);
  });
  ctx.lineWidth = 1;
}

function barPlot(canvas, rows) {
  const { ctx, w, h } = prepare(canvas);
  const top = Math.max(...rows.map((r) => r.sum_rate)) * 1.1;
  const { sy, m } = axes(ctx, w, h, [0, top], []);
  const slot = (w - m.l - m.r) / rows.length;
  rows.forEach((r, i) => {
    const x = m.l + i * slot + slot * 0.15;
    ctx.fillStyle = COLORS[i % COLORS.length];
    ctx.fillRect(x, sy(r.sum_rate), slot * 0.7, sy(0) - sy(r.sum_rate));
    ctx.fillStyle = "#222";
    ctx.fillText(r.sum_rate.toFixed(2), x, sy(r.sum_rate) - 3);
    ctx.save();
    ctx.translate(x + 2, sy(0) - 4);
    ctx.rotate(-Math.PI / 2);
    ctx.fillStyle = "#fff";
    ctx.fillText(LABELS[r.method], 0, 10);
    ctx.restore();
  });
}

function phasePlot(canvas, phase, modulus) {
  const { ctx, w, h } = prepare(canvas);
  const r = Math.min(w, h) / 2 - 16;
  const cx = w / 2;
  const cy = h / 2;
  ctx.strokeStyle = "#bbb";
  ctx.beginPath();
  ctx.arc(cx, cy, r, 0, 2 * Math.PI);
  ctx.stroke();
  ctx.fillStyle = COLORS[1];
  phase.forEach((a, i) => {
    ctx.beginPath();
    ctx.arc(cx + r * modulus[i] * Math.cos(a), cy - r * modulus[i] * Math.sin(a), 3, 0, 2 * Math.PI);
    ctx.fill();
  });
  ctx.fillStyle = "#444";
  ctx.fillText("unit circle = |θ| = 1", 6, h - 6);
}

// Yield to the browser so the status line repaints before a long solve.
function run(label, work) {
  setStatus(`${label}…`);
  setTimeout(() => {
    const t0 = performance.now();
    try {
      work();
      setStatus(`${label} done in ${((performance.now() - t0) / 1000).toFixed(2)} s`);
    } catch (e) {
      setStatus(String(e.message || e), true);
    }
  }, 20);
}

function showTrace() {
  run("convergence", () => {
    const t = JSON.parse(solveTrace(params()));
    const xs = [0, ...t.points.map((p) => p.iteration)];
    linePlot(document.getElementById("trace"), [{ label: LABELS[t.method], y: [t.initial_sum_rate, ...t.points.map((p) => p.sum_rate)] }], xs);
    phasePlot(document.getElementById("phases"), t.theta_phase, t.theta_modulus);
  });
}

function showComparison() {
  run("comparison", () => barPlot(document.getElementById("compare"), JSON.parse(compareMethods(params()))));
}

function showSweep() {
  run("sweep", () => {
    const curves = JSON.parse(locationSweep(params()));
    const series = curves.map((c, k) => ({ label: LABELS[c.method], y: c.mean, color: COLORS[k + 1] }));
    linePlot(document.getElementById("sweep"), series, curves[0].x);
  });
}

for (const id of inputs) {
  const el = document.getElementById(id);
  const out = el.parentElement.querySelector("output");
  const sync = () => (out.textContent = el.value);
  el.addEventListener("input", sync);
  sync();
}

await init();
document.getElementById("run-trace").onclick = showTrace;
document.getElementById("run-compare").onclick = showComparison;
document.getElementById("run-sweep").onclick = showSweep;
showTrace();
showComparison();
