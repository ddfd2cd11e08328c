import init, { simulate_scene, bf_curve, roc_demo } from "./pkg/fixmark_web.js";

const PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#e377c2", "#8c564b", "#bcbd22", "#7f7f7f"];
const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function sceneArgs() {
  return [num("seed"), num("regions"), num("stick"), num("subjects"), num("fixations")];
}

// Runs `fn` after the browser has painted, reporting errors in `errId`.
function guarded(errId, fn) {
  $(errId).textContent = "working...";
  setTimeout(() => {
    try {
      fn();
      $(errId).textContent = "";
    } catch (e) {
      $(errId).textContent = String(e.message ?? e);
    }
  }, 10);
}

let scene = null;

function drawScene() {
  const c = $("scene");
  const ctx = c.getContext("2d");
  const g = scene.grid;
  const sx = (x) => ((x - g.x[0]) / (g.x[1] - g.x[0])) * c.width;
  const sy = (y) => c.height - ((y - g.y[0]) / (g.y[1] - g.y[0])) * c.height;
  const max = Math.max(...g.density);
  const cw = c.width / g.width;
  const ch = c.height / g.height;
  for (let r = 0; r < g.height; r++) {
    for (let q = 0; q < g.width; q++) {
      const v = g.density[r * g.width + q] / max;
      const shade = Math.round(255 - 180 * Math.sqrt(v));
      ctx.fillStyle = `rgb(255, ${shade}, ${Math.round(shade * 0.85)})`;
      ctx.fillRect(q * cw, c.height - (r + 1) * ch, cw + 1, ch + 1);
    }
  }
  for (const s of scene.subjects) {
    s.points.forEach(([x, y], i) => {
      ctx.fillStyle = PALETTE[s.fitted_states[i] % PALETTE.length];
      ctx.beginPath();
      ctx.arc(sx(x), sy(y), 2.5, 0, 2 * Math.PI);
      ctx.fill();
    });
  }
  const chosen = scene.subjects[Number($("subject").value) || 0];
  if (chosen) {
    ctx.strokeStyle = "rgba(0,0,0,0.7)";
    ctx.lineWidth = 1.2;
    ctx.beginPath();
    chosen.points.forEach(([x, y], i) => (i ? ctx.lineTo(sx(x), sy(y)) : ctx.moveTo(sx(x), sy(y))));
    ctx.stroke();
  }
  scene.centres.forEach(([x, y], i) => {
    ctx.strokeStyle = "#000";
    ctx.fillStyle = PALETTE[i % PALETTE.length];
    ctx.fillRect(sx(x) - 5, sy(y) - 5, 10, 10);
    ctx.strokeRect(sx(x) - 5, sy(y) - 5, 10, 10);
  });
}

function runScene() {
  guarded("scene-err", () => {
    scene = JSON.parse(simulate_scene(...sceneArgs(), num("kfit"), 112, 84));
    const sel = $("subject");
    sel.innerHTML = scene.subjects.map((s, i) => `<option value="${i}">${s.id}</option>`).join("");
    $("posterior").textContent = `k = ${scene.k}\n${scene.rendered}`;
    drawScene();
  });
}

function axes(ctx, c, pad, xr, yr, xlabel, ylabel) {
  ctx.clearRect(0, 0, c.width, c.height);
  ctx.strokeStyle = "#444";
  ctx.fillStyle = "#444";
  ctx.font = "11px sans-serif";
  ctx.beginPath();
  ctx.moveTo(pad, pad / 2);
  ctx.lineTo(pad, c.height - pad);
  ctx.lineTo(c.width - pad / 2, c.height - pad);
  ctx.stroke();
  ctx.fillText(xlabel, c.width / 2 - 20, c.height - 6);
  ctx.save();
  ctx.translate(12, c.height / 2 + 30);
  ctx.rotate(-Math.PI / 2);
  ctx.fillText(ylabel, 0, 0);
  ctx.restore();
  const X = (x) => pad + ((x - xr[0]) / (xr[1] - xr[0])) * (c.width - 1.5 * pad);
  const Y = (y) => c.height - pad - ((y - yr[0]) / (yr[1] - yr[0])) * (c.height - 1.5 * pad);
  return [X, Y];
}

function runCurve() {
  guarded("curve-err", () => {
    const res = JSON.parse(bf_curve(...sceneArgs(), num("kmax"), num("mc")));
    const c = $("curve");
    const ctx = c.getContext("2d");
    const ks = res.points.map((p) => p.k);
    const vals = res.points.flatMap((p) => [p.log2_bf, p.closed_form_log2_bf]);
    const lo = Math.min(0, ...vals);
    const hi = Math.max(0, ...vals);
    const [X, Y] = axes(ctx, c, 40, [ks[0] - 0.5, ks[ks.length - 1] + 0.5], [lo - 1, hi + 1], "k", "log2 BF");
    ctx.strokeStyle = "#aaa";
    ctx.beginPath();
    ctx.moveTo(X(ks[0] - 0.5), Y(0));
    ctx.lineTo(X(ks[ks.length - 1] + 0.5), Y(0));
    ctx.stroke();
    for (const p of res.points) {
      ctx.fillStyle = p.k === res.selected_k ? "#d62728" : "#1f77b4";
      const top = Math.min(Y(0), Y(p.log2_bf));
      ctx.fillRect(X(p.k) - 12, top, 24, Math.abs(Y(p.log2_bf) - Y(0)));
      ctx.fillStyle = "#000";
      ctx.beginPath();
      ctx.arc(X(p.k), Y(p.closed_form_log2_bf), 3, 0, 2 * Math.PI);
      ctx.fill();
      ctx.fillText(String(p.k), X(p.k) - 3, c.height - 26);
    }
    $("report").textContent = res.rendered + "\nbars: combined log2 BF; dots: closed form";
  });
}

function runRoc() {
  guarded("roc-err", () => {
    const res = JSON.parse(roc_demo(num("seed"), num("images"), num("roc-stick"), num("roc-regions"), 5));
    const c = $("roc");
    const ctx = c.getContext("2d");
    const [X, Y] = axes(ctx, c, 40, [0, 1], [0, 1], "FPR (grayscale)", "TPR (coloured)");
    ctx.strokeStyle = "#bbb";
    ctx.beginPath();
    ctx.moveTo(X(0), Y(0));
    ctx.lineTo(X(1), Y(1));
    ctx.stroke();
    ctx.strokeStyle = "#d62728";
    ctx.lineWidth = 2;
    ctx.beginPath();
    res.curve.points.forEach((p, i) => (i ? ctx.lineTo(X(p.fpr), Y(p.tpr)) : ctx.moveTo(X(p.fpr), Y(p.tpr))));
    ctx.stroke();
    ctx.lineWidth = 1;
    const fmt = (v) => v.toFixed(2);
    const best = res.best
      ? `best threshold log2 BF < ${res.best.threshold}: TPR ${fmt(res.best.tpr)}, FPR ${fmt(res.best.fpr)}`
      : "";
    $("roc-text").textContent =
      `AUC ${res.curve.auc.toFixed(3)}\n${best}\n\n` +
      `coloured log2 BF:  ${res.coloured_log2.map(fmt).join(" ")}\n` +
      `grayscale log2 BF: ${res.grayscale_log2.map(fmt).join(" ")}`;
  });
}

await init();
$("run-scene").onclick = runScene;
$("subject").onchange = () => scene && drawScene();
$("run-curve").onclick = runCurve;
$("run-roc").onclick = runRoc;
runScene();
