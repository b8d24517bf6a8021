import init, { coupled_paths, local_time, annulus_profile } from "./pkg/motc_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
const coords = (id) => $(id).value.split(",").map((s) => Number(s.trim()));
const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

function frame(canvas, xs, ys, pad = 40) {
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const lo = (a) => Math.min(...a), hi = (a) => Math.max(...a);
  let [x0, x1, y0, y1] = [lo(xs), hi(xs), lo(ys), hi(ys)];
  if (x1 === x0) x1 = x0 + 1;
  if (y1 === y0) { y0 -= 0.5; y1 += 0.5; }
  const sx = (x) => pad + ((x - x0) / (x1 - x0)) * (canvas.width - 2 * pad);
  const sy = (y) => canvas.height - pad - ((y - y0) / (y1 - y0)) * (canvas.height - 2 * pad);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, canvas.width - 2 * pad, canvas.height - 2 * pad);
  ctx.fillStyle = "#555";
  ctx.font = "11px sans-serif";
  ctx.fillText(x0.toPrecision(3), pad, canvas.height - pad + 14);
  ctx.fillText(x1.toPrecision(3), canvas.width - pad - 24, canvas.height - pad + 14);
  ctx.fillText(y0.toPrecision(3), 2, canvas.height - pad);
  ctx.fillText(y1.toPrecision(3), 2, pad + 4);
  return { ctx, sx, sy };
}

function line({ ctx, sx, sy }, xs, ys, color, dash = []) {
  ctx.strokeStyle = color;
  ctx.setLineDash(dash);
  ctx.beginPath();
  xs.forEach((x, i) => (i ? ctx.lineTo(sx(x), sy(ys[i])) : ctx.moveTo(sx(x), sy(ys[i]))));
  ctx.stroke();
  ctx.setLineDash([]);
}

function show(id, f) {
  try {
    $(id).className = "out";
    $(id).textContent = f();
  } catch (e) {
    $(id).className = "out err";
    $(id).textContent = String(e.message ?? e);
  }
}

function runCoupled() {
  show("c-out", () => {
    const m = $("c-m").value;
    const r = JSON.parse(coupled_paths(m, coords("c-x"), coords("c-y"), num("c-t"), num("c-n"), num("c-p"), num("c-s")));
    const pts = r.pairs.flatMap((p) => p.x.concat(p.y));
    const ext = m === "disk" || m === "hemisphere" ? [-1, 1] : [];
    const pf = frame($("c-paths"), pts.map((q) => q[0]).concat(ext), pts.map((q) => q[1]).concat(ext));
    if (ext.length) {
      pf.ctx.strokeStyle = "#bbb";
      pf.ctx.beginPath();
      pf.ctx.arc(pf.sx(0), pf.sy(0), pf.sx(1) - pf.sx(0), 0, 2 * Math.PI);
      pf.ctx.stroke();
    }
    r.pairs.forEach((p, i) => {
      line(pf, p.x.map((q) => q[0]), p.x.map((q) => q[1]), COLORS[i % COLORS.length]);
      line(pf, p.y.map((q) => q[0]), p.y.map((q) => q[1]), COLORS[i % COLORS.length], [4, 3]);
    });
    const df = frame($("c-dist"), r.t, r.bound.concat(r.mean_distance, [0]));
    r.pairs.forEach((p) => line(df, r.t, p.distance, "#ccc"));
    line(df, r.t, r.mean_distance, "#1f77b4");
    line(df, r.t, r.bound, "#d62728", [6, 4]);
    const last = r.t.length - 1;
    return `K = ${r.k}\nmean distance at T: ${r.mean_distance[last].toPrecision(5)}\n` +
      `bound e^{KT} rho(x,y): ${r.bound[last].toPrecision(5)}\n(blue: mean distance, red dashed: bound, grey: shown pairs)`;
  });
}

function runLocalTime() {
  show("l-out", () => {
    const r = JSON.parse(local_time(num("l-t"), num("l-k"), num("l-n"), num("l-p"), num("l-s")));
    const hiBand = r.mean.map((m, i) => m + 3 * r.se[i]);
    const f = frame($("l-plot"), [0].concat(r.t), [0].concat(r.target, hiBand));
    line(f, [0].concat(r.t), [0].concat(r.target), "#d62728", [6, 4]);
    line(f, r.t, r.mean, "#1f77b4");
    line(f, r.t, hiBand, "#9ecae1");
    line(f, r.t, r.mean.map((m, i) => m - 3 * r.se[i]), "#9ecae1");
    const rows = r.t.map((t, i) => `t=${t.toFixed(3)}  mean=${r.mean[i].toFixed(4)} +- ${r.se[i].toFixed(4)}  2sqrt(t/pi)=${r.target[i].toFixed(4)}`);
    return rows.join("\n") + `\nfitted C = ${r.c_fit.toExponential(3)}`;
  });
}

function runProfile() {
  show("a-out", () => {
    const r = JSON.parse(annulus_profile(num("a-sigma"), num("a-gamma"), num("a-k"), num("a-r")));
    const f = frame($("a-plot"), r.s, r.phi.concat(r.dphi));
    line(f, r.s, r.phi, "#1f77b4");
    line(f, r.s, r.dphi, "#2ca02c", [4, 3]);
    f.ctx.strokeStyle = "#d62728";
    f.ctx.beginPath();
    f.ctx.moveTo(f.sx(r.r), 0);
    f.ctx.lineTo(f.sx(r.r), f.ctx.canvas.height);
    f.ctx.stroke();
    return `phi (blue), phi' (green), s = r (red)\n` + JSON.stringify({ summary: r.summary, theta: r.theta, theta_from_bounds: r.theta_from_bounds, kappa_f: r.kappa_f }, null, 2);
  });
}

init().then(() => {
  $("status").textContent = "Ready.";
  $("c-run").onclick = runCoupled;
  $("l-run").onclick = runLocalTime;
  $("a-run").onclick = runProfile;
  runCoupled();
  runLocalTime();
  runProfile();
}, (e) => {
  $("status").className = "err";
  $("status").textContent = `Failed to load the module: ${e}`;
});
