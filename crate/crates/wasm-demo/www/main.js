import init, { schedule_curves, mmd_clouds, gaussian_scores, eer_curve } from "./pkg/xdsv_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function frame(canvas, xmin, xmax, ymin, ymax) {
  const ctx = canvas.getContext("2d");
  const pad = 30;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, 5, canvas.width - pad - 5, canvas.height - pad - 5);
  const sx = (x) => pad + ((x - xmin) / (xmax - xmin || 1)) * (canvas.width - pad - 5);
  const sy = (y) => canvas.height - pad - ((y - ymin) / (ymax - ymin || 1)) * (canvas.height - pad - 5);
  ctx.fillStyle = "#666";
  ctx.font = "11px sans-serif";
  ctx.fillText(xmin.toPrecision(3), pad, canvas.height - 12);
  ctx.fillText(xmax.toPrecision(3), canvas.width - 40, canvas.height - 12);
  ctx.fillText(ymax.toPrecision(3), 2, 14);
  return { ctx, sx, sy };
}

function line(f, xs, ys, color) {
  f.ctx.strokeStyle = color;
  f.ctx.beginPath();
  xs.forEach((x, i) => (i ? f.ctx.lineTo(f.sx(x), f.sy(ys[i])) : f.ctx.moveTo(f.sx(x), f.sy(ys[i]))));
  f.ctx.stroke();
}

function fail(out, e) {
  out.className = "out err";
  out.textContent = String(e.message ?? e);
}

function drawSchedules() {
  const out = $("s-out");
  try {
    const v = schedule_curves(num("s-steps"), num("s-eta0"), num("s-alpha"), num("s-beta"),
      num("s-theta"), num("s-dim"), num("s-warm"));
    const rows = v.length / 5;
    const col = (k) => Array.from({ length: rows }, (_, i) => v[i * 5 + k]);
    const p = col(0), block = col(1), backbone = col(2), mu = col(3), noam = col(4);
    const lrMax = Math.max(...block, ...noam);
    const f = frame($("s-plot"), 0, 1, 0, 1);
    line(f, p, block.map((x) => x / lrMax), "#1f77b4");
    line(f, p, backbone.map((x) => x / lrMax), "#aec7e8");
    line(f, p, noam.map((x) => x / lrMax), "#2ca02c");
    line(f, p, mu, "#d62728");
    const half = Math.floor(rows / 2) - 1;
    out.className = "out";
    out.innerHTML =
      `<span style="color:#1f77b4">block lr</span>, <span style="color:#aec7e8">backbone lr</span>, ` +
      `<span style="color:#2ca02c">noam lr</span> (scaled by ${lrMax.toExponential(3)}), ` +
      `<span style="color:#d62728">&mu;</span> against progress p.<br>` +
      `p=${p[half].toFixed(3)}: lr=${block[half].toExponential(5)} &mu;=${mu[half].toFixed(4)}; ` +
      `p=1: lr=${block[rows - 1].toExponential(5)} &mu;=${mu[rows - 1].toFixed(4)}`;
  } catch (e) {
    fail(out, e);
  }
}

function drawMmd() {
  const out = $("m-out");
  try {
    const n = num("m-n");
    const v = mmd_clouds(num("m-seed"), n, num("m-shift"), num("m-scale"), num("m-bw"));
    const pts = v.slice(3);
    const xs = pts.filter((_, i) => i % 2 === 0), ys = pts.filter((_, i) => i % 2 === 1);
    const lim = Math.max(4, ...xs.map(Math.abs), ...ys.map(Math.abs));
    const f = frame($("m-plot"), -lim, lim, -lim, lim);
    xs.forEach((x, i) => {
      f.ctx.fillStyle = i < n ? "#1f77b4" : "#ff7f0e";
      f.ctx.fillRect(f.sx(x) - 2, f.sy(ys[i]) - 2, 4, 4);
    });
    out.className = "out";
    out.textContent = `linear MMD ${v[0].toFixed(4)}   RBF MMD ${v[1].toFixed(4)}   bandwidth ${v[2].toFixed(3)}`;
  } catch (e) {
    fail(out, e);
  }
}

function drawEer() {
  const out = $("e-out");
  try {
    const nt = num("e-nt"), nn = num("e-nn");
    const s = gaussian_scores(num("e-seed"), nt, nn, num("e-sep"));
    const v = eer_curve(s.slice(0, nt), s.slice(nt));
    const pts = v.slice(2);
    const thr = pts.filter((_, i) => i % 3 === 0);
    const far = pts.filter((_, i) => i % 3 === 1), frr = pts.filter((_, i) => i % 3 === 2);
    const f = frame($("e-plot"), thr[0], thr[thr.length - 1], 0, 1);
    line(f, thr, far, "#1f77b4");
    line(f, thr, frr, "#d62728");
    f.ctx.strokeStyle = "#444";
    f.ctx.beginPath();
    f.ctx.arc(f.sx(v[1]), f.sy(v[0]), 4, 0, 2 * Math.PI);
    f.ctx.stroke();
    out.className = "out";
    out.innerHTML = `<span style="color:#1f77b4">FAR</span> and <span style="color:#d62728">FRR</span> ` +
      `against threshold. EER ${(100 * v[0]).toFixed(3)}% at threshold ${v[1].toFixed(4)}`;
  } catch (e) {
    fail(out, e);
  }
}

await init();
for (const [section, draw] of [["schedules", drawSchedules], ["mmd", drawMmd], ["eer", drawEer]]) {
  $(section).querySelectorAll("input").forEach((el) => el.addEventListener("input", draw));
  draw();
}
