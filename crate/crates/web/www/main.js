import init, { datasetPoints, trainDemo, chi2Curve } from "./pkg/featagg_web.js";

const CLASS_COLORS = ["rgba(31,119,180,0.45)", "rgba(214,39,40,0.45)"];
const FIELD_COLORS = [[240, 228, 66], [86, 180, 233], [0, 158, 115], [230, 159, 0], [204, 121, 167], [0, 114, 178], [213, 94, 0], [150, 150, 150]];
const BOUNDS = { concentric: [-3.4, 3.4, -3.4, 3.4], xor: [-0.7, 1.7, -0.7, 1.7] };
const FIELD_RES = 60;

const $ = (id) => document.getElementById(id);
let run = null;
let points = null;
let bounds = BOUNDS.concentric;

function toCanvas(canvas, [x0, x1, y0, y1], x, y) {
  return [((x - x0) / (x1 - x0)) * canvas.width, ((y1 - y) / (y1 - y0)) * canvas.height];
}

function drawScatter(epoch) {
  const canvas = $("scatter");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  if (run) {
    const field = run.responsibility_field(...bounds, FIELD_RES);
    const cw = canvas.width / FIELD_RES;
    const ch = canvas.height / FIELD_RES;
    for (let i = 0; i < FIELD_RES * FIELD_RES; i++) {
      const [r, g, b] = FIELD_COLORS[field[2 * i] % FIELD_COLORS.length];
      ctx.fillStyle = `rgba(${r},${g},${b},${0.35 * field[2 * i + 1]})`;
      ctx.fillRect((i % FIELD_RES) * cw, Math.floor(i / FIELD_RES) * ch, cw + 1, ch + 1);
    }
  }
  for (let i = 0; i < points.length; i += 3) {
    const [px, py] = toCanvas(canvas, bounds, points[i], points[i + 1]);
    ctx.fillStyle = CLASS_COLORS[points[i + 2]];
    ctx.fillRect(px - 1, py - 1, 2, 2);
  }
  if (!run) return;
  const k = run.k();
  const codebooks = run.codebooks();
  ctx.strokeStyle = "black";
  ctx.lineWidth = 3;
  for (let j = 0; j < k; j++) {
    const at = (epoch * k + j) * 2;
    const [px, py] = toCanvas(canvas, bounds, codebooks[at], codebooks[at + 1]);
    ctx.beginPath();
    ctx.moveTo(px - 8, py - 8); ctx.lineTo(px + 8, py + 8);
    ctx.moveTo(px - 8, py + 8); ctx.lineTo(px + 8, py - 8);
    ctx.stroke();
  }
}

function drawCurves(canvas, series, xMax, marker) {
  const ctx = canvas.getContext("2d");
  const pad = 24;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.strokeStyle = "#999";
  ctx.lineWidth = 1;
  ctx.strokeRect(pad, pad / 2, canvas.width - 1.5 * pad, canvas.height - 1.5 * pad);
  const sx = (x) => pad + (x / xMax) * (canvas.width - 1.5 * pad);
  const sy = (y) => canvas.height - pad - y * (canvas.height - 1.5 * pad);
  series.forEach(({ xs, ys, color, name }, i) => {
    ctx.strokeStyle = color;
    ctx.lineWidth = 2;
    ctx.beginPath();
    xs.forEach((x, j) => (j ? ctx.lineTo(sx(x), sy(ys[j])) : ctx.moveTo(sx(x), sy(ys[j]))));
    ctx.stroke();
    ctx.fillStyle = color;
    ctx.fillText(name, canvas.width - 110, pad + 14 * i);
  });
  if (marker !== undefined) {
    ctx.strokeStyle = "#555";
    ctx.setLineDash([3, 3]);
    ctx.beginPath();
    ctx.moveTo(sx(marker), sy(0));
    ctx.lineTo(sx(marker), sy(1));
    ctx.stroke();
    ctx.setLineDash([]);
  }
}

function drawAccuracy(epoch) {
  if (!run) return;
  const train = Array.from(run.train_accuracy());
  const test = Array.from(run.test_accuracy());
  const xs = train.map((_, i) => i);
  drawCurves($("accuracy"), [
    { xs, ys: train, color: "#1f77b4", name: "train accuracy" },
    { xs, ys: test, color: "#d62728", name: "test accuracy" },
  ], Math.max(1, xs.length - 1), epoch);
}

function drawKernel() {
  const y = Number($("kernel-y").value);
  $("kernel-y-label").textContent = y.toFixed(2);
  const c = chi2Curve(y, 2, 0.5, 100);
  const xs = [], exact = [], approx = [];
  for (let i = 0; i < c.length; i += 3) { xs.push(c[i]); exact.push(c[i + 1]); approx.push(c[i + 2]); }
  drawCurves($("kernel"), [
    { xs, ys: exact, color: "#333", name: "chi2 kernel" },
    { xs, ys: approx, color: "#2ca02c", name: "feature map" },
  ], 1);
}

function showEpoch() {
  const epoch = Number($("epoch").value);
  $("epoch-label").textContent = epoch;
  drawScatter(epoch);
  drawAccuracy(epoch);
}

function train() {
  const dataset = $("dataset").value;
  const noise = Number($("noise").value);
  const seed = Number($("seed").value);
  const epochs = Number($("epochs").value);
  $("status").textContent = "training…";
  setTimeout(() => {
    try {
      bounds = BOUNDS[dataset];
      points = datasetPoints(dataset, noise, seed);
      const t0 = performance.now();
      run = trainDemo(dataset, Number($("k").value), Number($("gamma").value), $("init").value, epochs, noise, seed);
      $("epoch").max = epochs;
      $("epoch").value = epochs;
      $("status").textContent =
        `final test accuracy ${run.final_test_accuracy().toFixed(4)} (${(performance.now() - t0).toFixed(0)} ms)`;
      showEpoch();
    } catch (e) {
      run = null;
      $("status").textContent = `error: ${e.message ?? e}`;
    }
  }, 0);
}

await init();
points = datasetPoints("concentric", 0.1, 1);
drawScatter(0);
drawKernel();
$("train").addEventListener("click", train);
$("epoch").addEventListener("input", showEpoch);
$("kernel-y").addEventListener("input", drawKernel);
