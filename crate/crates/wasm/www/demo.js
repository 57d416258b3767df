import init, { simulateConvergence, nms, precisionRecall } from "./pkg/hct_wasm.js";

const $ = (id) => document.getElementById(id);

function axes(ctx, w, h, pad) {
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#444";
  ctx.beginPath();
  ctx.moveTo(pad, pad);
  ctx.lineTo(pad, h - pad);
  ctx.lineTo(w - pad, h - pad);
  ctx.stroke();
}

// --- convergence ---

function runConvergence() {
  const run = JSON.parse(simulateConvergence(
    Number($("cv-seed").value), Number($("cv-opt").value),
    Number($("cv-thr").value), Number($("cv-pat").value), 5000));
  const c = $("cv-plot"), ctx = c.getContext("2d"), pad = 30;
  axes(ctx, c.width, c.height, pad);
  const logs = run.distances.map((d) => Math.log10(Math.max(d, 1e-12)));
  const lo = Math.min(...logs, -7), hi = Math.max(...logs, -1);
  const x = (i) => pad + (i / Math.max(1, logs.length - 1)) * (c.width - 2 * pad);
  const y = (v) => c.height - pad - ((v - lo) / (hi - lo)) * (c.height - 2 * pad);
  ctx.strokeStyle = "#c33";
  ctx.setLineDash([4, 4]);
  const t = Math.log10(Number($("cv-thr").value));
  ctx.beginPath(); ctx.moveTo(pad, y(t)); ctx.lineTo(c.width - pad, y(t)); ctx.stroke();
  ctx.setLineDash([]);
  ctx.strokeStyle = "#246";
  ctx.beginPath();
  logs.forEach((v, i) => (i ? ctx.lineTo(x(i), y(v)) : ctx.moveTo(x(i), y(v))));
  ctx.stroke();
  ctx.fillStyle = "#222";
  ctx.fillText(`log10 χ²  [${lo.toFixed(1)}, ${hi.toFixed(1)}]`, pad + 4, pad - 8);
  ctx.fillText("tiles", c.width - pad - 24, c.height - 10);

  $("cv-summary").textContent = run.converged
    ? `Converged after ${run.tiles_seen} tiles.`
    : `Not converged after ${run.tiles_seen} tiles.`;
  const rows = run.ndc_percent.map(([cls, p]) => `<tr><td>${cls}</td><td>${p.toFixed(2)}%</td></tr>`);
  rows.push(`<tr><th>M:E</th><th>${run.bm_me === null ? "—" : run.bm_me.toFixed(3)}</th></tr>`);
  $("cv-table").innerHTML = rows.join("");
}

// --- NMS ---

const CLASSES = ["blast", "lymphocyte", "erythroblast"];
const COLOURS = { blast: "#d33", lymphocyte: "#36c", erythroblast: "#2a2" };
let candidates = [];

function drawNms() {
  const conf = Number($("nms-conf").value), iou = Number($("nms-iou").value);
  $("nms-conf-v").textContent = conf.toFixed(2);
  $("nms-iou-v").textContent = iou.toFixed(2);
  const kept = new Set(JSON.parse(nms(JSON.stringify(candidates), conf, iou)));
  const c = $("nms-canvas"), ctx = c.getContext("2d");
  ctx.clearRect(0, 0, c.width, c.height);
  candidates.forEach((b, i) => {
    ctx.strokeStyle = COLOURS[b.cls];
    ctx.globalAlpha = b.confidence < conf ? 0.15 : 1;
    ctx.setLineDash(kept.has(i) ? [] : [3, 3]);
    ctx.lineWidth = kept.has(i) ? 2 : 1;
    ctx.strokeRect((b.cx - b.w / 2) * c.width, (b.cy - b.h / 2) * c.height, b.w * c.width, b.h * c.height);
  });
  ctx.globalAlpha = 1;
  ctx.setLineDash([]);
  $("nms-summary").textContent = `${candidates.length} candidates, ${kept.size} kept.`;
}

function dropCluster(ev) {
  const r = ev.target.getBoundingClientRect();
  const cx = (ev.clientX - r.left) / r.width, cy = (ev.clientY - r.top) / r.height;
  const cls = CLASSES[Math.floor(Math.random() * CLASSES.length)];
  const size = 0.06 + Math.random() * 0.08;
  for (let k = 0; k < 6; k++) {
    const j = () => (Math.random() - 0.5) * size * 0.6;
    candidates.push({
      cx: Math.min(1, Math.max(0, cx + j())), cy: Math.min(1, Math.max(0, cy + j())),
      w: size * (0.8 + Math.random() * 0.4), h: size * (0.8 + Math.random() * 0.4),
      cls, confidence: Math.round(Math.random() * 100) / 100,
    });
  }
  drawNms();
}

// --- precision/recall ---

let scene = { gts: [], preds: [] };

function newScene() {
  const gts = [], preds = [];
  for (let i = 0; i < 12; i++) {
    const g = { cx: 0.1 + Math.random() * 0.8, cy: 0.1 + Math.random() * 0.8, w: 0.08 + Math.random() * 0.06, h: 0.08 + Math.random() * 0.06, cls: "blast" };
    gts.push(g);
    if (Math.random() < 0.8) {
      const n = () => (Math.random() - 0.5) * 0.05;
      preds.push({ ...g, cx: g.cx + n(), cy: g.cy + n(), confidence: Math.round((0.4 + Math.random() * 0.6) * 100) / 100 });
    }
  }
  for (let i = 0; i < 5; i++) {
    preds.push({ cx: 0.1 + Math.random() * 0.8, cy: 0.1 + Math.random() * 0.8, w: 0.1, h: 0.1, cls: "blast", confidence: Math.round(Math.random() * 70) / 100 });
  }
  scene = { gts, preds };
  drawPr();
}

function drawPr() {
  const iou = Number($("pr-iou").value);
  $("pr-iou-v").textContent = iou.toFixed(2);
  const s = $("pr-scene"), sctx = s.getContext("2d");
  sctx.clearRect(0, 0, s.width, s.height);
  const rect = (ctx, b, W) => ctx.strokeRect((b.cx - b.w / 2) * W, (b.cy - b.h / 2) * W, b.w * W, b.h * W);
  sctx.lineWidth = 2;
  sctx.strokeStyle = "#000";
  scene.gts.forEach((g) => rect(sctx, g, s.width));
  sctx.lineWidth = 1;
  scene.preds.forEach((p) => {
    sctx.strokeStyle = `hsl(${120 * p.confidence}, 70%, 40%)`;
    rect(sctx, p, s.width);
  });

  const [curve] = JSON.parse(precisionRecall(JSON.stringify(scene.preds), JSON.stringify(scene.gts), iou));
  const c = $("pr-plot"), ctx = c.getContext("2d"), pad = 30, W = c.width - 2 * pad, H = c.height - 2 * pad;
  axes(ctx, c.width, c.height, pad);
  ctx.fillStyle = "#222";
  ctx.fillText("recall", c.width - pad - 30, c.height - 10);
  ctx.fillText("precision", pad + 4, pad - 8);
  const X = (r) => pad + r * W, Y = (p) => c.height - pad - p * H;
  ctx.strokeStyle = "#246";
  ctx.beginPath();
  curve.curve.forEach(([r, p], i) => (i ? ctx.lineTo(X(r), Y(p)) : ctx.moveTo(X(r), Y(p))));
  ctx.stroke();
  // the eleven interpolation levels
  ctx.fillStyle = "#c33";
  for (let i = 0; i <= 10; i++) {
    const level = i / 10;
    const best = Math.max(0, ...curve.curve.filter(([r]) => r >= level - 1e-12).map(([, p]) => p));
    ctx.fillRect(X(level) - 2, Y(best) - 2, 4, 4);
  }
  $("pr-summary").innerHTML =
    `AP (11-pt) ${curve.ap.toFixed(4)}<br>precision ${curve.precision.toFixed(3)}<br>` +
    `recall ${curve.recall.toFixed(3)}<br>F1 ${curve.f1.toFixed(3)}<br>LAMR ${curve.lamr.toFixed(3)}`;
}

async function main() {
  await init();
  $("status").textContent = "";
  $("cv-run").onclick = runConvergence;
  $("nms-canvas").onclick = dropCluster;
  $("nms-conf").oninput = drawNms;
  $("nms-iou").oninput = drawNms;
  $("nms-clear").onclick = () => { candidates = []; drawNms(); };
  $("pr-iou").oninput = drawPr;
  $("pr-new").onclick = newScene;
  runConvergence();
  drawNms();
  newScene();
}

main().catch((e) => { $("status").textContent = `Failed to start: ${e}`; });
