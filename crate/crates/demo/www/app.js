import init, { sweep, impulse, spectrum } from "./pkg/inertia_demo.js";

const $ = (id) => document.getElementById(id);
const params = ["d1", "d2", "a12", "budget", "cap"];
const BLUE = "#1f77b4", RED = "#d62728", GREY = "#888";
let sweepData = null;
let pick = 50;

function call(fn, ...args) {
  const out = JSON.parse(fn(...args));
  if (out && out.error) throw new Error(out.error);
  return out;
}

function read() {
  const v = Object.fromEntries(params.map((p) => [p, parseFloat($(p).value)]));
  v.node = parseInt($("node").value, 10);
  return v;
}

function setup(canvas) {
  const dpr = window.devicePixelRatio || 1;
  const w = canvas.clientWidth, h = canvas.clientHeight;
  canvas.width = w * dpr;
  canvas.height = h * dpr;
  const ctx = canvas.getContext("2d");
  ctx.setTransform(dpr, 0, 0, dpr, 0, 0);
  ctx.clearRect(0, 0, w, h);
  return { ctx, w, h };
}

function extent(values) {
  let lo = Math.min(...values), hi = Math.max(...values);
  if (lo === hi) { lo -= 1; hi += 1; }
  const pad = 0.05 * (hi - lo);
  return [lo - pad, hi + pad];
}

// series: [{x, y, color, dots}]
function plot(canvas, series, { marker } = {}) {
  const { ctx, w, h } = setup(canvas);
  const m = { l: 48, r: 10, t: 10, b: 24 };
  const [x0, x1] = extent(series.flatMap((s) => s.x));
  const [y0, y1] = extent(series.flatMap((s) => s.y));
  const sx = (x) => m.l + ((x - x0) / (x1 - x0)) * (w - m.l - m.r);
  const sy = (y) => h - m.b - ((y - y0) / (y1 - y0)) * (h - m.t - m.b);

  ctx.strokeStyle = "#ccc";
  ctx.fillStyle = "#555";
  ctx.font = "11px system-ui";
  for (let i = 0; i <= 4; i++) {
    const y = y0 + ((y1 - y0) * i) / 4, x = x0 + ((x1 - x0) * i) / 4;
    ctx.beginPath(); ctx.moveTo(m.l, sy(y)); ctx.lineTo(w - m.r, sy(y)); ctx.stroke();
    ctx.fillText(y.toPrecision(3), 2, sy(y) + 4);
    ctx.fillText(x.toPrecision(3), sx(x) - 10, h - 6);
  }
  for (const s of series) {
    ctx.strokeStyle = ctx.fillStyle = s.color;
    if (s.dots) {
      s.x.forEach((x, i) => { ctx.beginPath(); ctx.arc(sx(x), sy(s.y[i]), 4, 0, 2 * Math.PI); ctx.fill(); });
    } else {
      ctx.lineWidth = 1.5;
      ctx.beginPath();
      s.x.forEach((x, i) => (i ? ctx.lineTo(sx(x), sy(s.y[i])) : ctx.moveTo(sx(x), sy(s.y[i]))));
      ctx.stroke();
    }
  }
  if (marker !== undefined) {
    ctx.strokeStyle = "#000";
    ctx.setLineDash([4, 3]);
    ctx.beginPath(); ctx.moveTo(sx(marker), m.t); ctx.lineTo(sx(marker), h - m.b); ctx.stroke();
    ctx.setLineDash([]);
  }
  return { invert: (px) => x0 + ((px - m.l) / (w - m.l - m.r)) * (x1 - x0) };
}

let sweepAxes = null;

function runSweep() {
  const v = read();
  sweepData = call(sweep, v.d1, v.d2, v.a12, v.cap, v.budget, 101);
}

function drawAll() {
  $("status").textContent = "";
  try {
    if (!sweepData) runSweep();
    const v = read();
    const s = sweepData;
    sweepAxes = plot($("sweep"), [
      { x: s.w1, y: s.m1, color: BLUE },
      { x: s.w1, y: s.m2, color: RED },
    ], { marker: s.w1[pick] });
    const opt = [s.m1[pick], s.m2[pick]];
    const even = [Math.min(v.budget / 2, v.cap), Math.min(v.budget / 2, v.cap)];
    $("picked").textContent =
      `w₁ = ${s.w1[pick].toFixed(2)}: m* = (${opt[0].toFixed(2)}, ${opt[1].toFixed(2)})` +
      (s.budget_active[pick] ? ", budget active" : ", budget slack");

    const horizon = 30;
    const ro = call(impulse, v.d1, v.d2, v.a12, opt[0], opt[1], v.node, horizon);
    const re = call(impulse, v.d1, v.d2, v.a12, even[0], even[1], v.node, horizon);
    plot($("angle"), [
      { x: re.t, y: re.angle_difference, color: GREY },
      { x: ro.t, y: ro.angle_difference, color: BLUE },
    ]);
    const eff = v.node === 1 ? "effort1" : "effort2";
    plot($("effort"), [
      { x: re.t, y: re[eff], color: GREY },
      { x: ro.t, y: ro[eff], color: BLUE },
    ]);
    const so = call(spectrum, v.d1, v.d2, v.a12, opt[0], opt[1]);
    const se = call(spectrum, v.d1, v.d2, v.a12, even[0], even[1]);
    plot($("spectrum"), [
      { x: se.map((z) => z.re), y: se.map((z) => z.im), color: GREY, dots: true },
      { x: so.map((z) => z.re), y: so.map((z) => z.im), color: BLUE, dots: true },
    ]);
    $("norms").textContent = `‖G‖² (unit w): ${ro.h2_norm_sq.toPrecision(4)} vs ${re.h2_norm_sq.toPrecision(4)}`;
  } catch (e) {
    $("status").textContent = e.message;
  }
}

await init();
for (const p of params) {
  const input = $(p), out = input.nextElementSibling;
  out.value = input.value;
  input.addEventListener("input", () => { out.value = input.value; });
  input.addEventListener("change", () => { sweepData = null; drawAll(); });
}
$("node").addEventListener("change", drawAll);
$("sweep").addEventListener("click", (ev) => {
  if (!sweepAxes || !sweepData) return;
  const rect = ev.target.getBoundingClientRect();
  const w1 = Math.min(1, Math.max(0, sweepAxes.invert(ev.clientX - rect.left)));
  pick = Math.round(w1 * (sweepData.w1.length - 1));
  drawAll();
});
window.addEventListener("resize", drawAll);
drawAll();
