import init, { boundValue, densityField, correlationSummary, samplePoints } from "./pkg/lancaster_web.js";

const $ = (id) => document.getElementById(id);

function rho() {
  const vals = $("rho").value.split(",").map((t) => Number(t.trim())).filter((t) => t === t);
  return new Float64Array(vals);
}

function guard(f) {
  return () => {
    $("status").textContent = "";
    try {
      f();
    } catch (e) {
      $("status").textContent = String(e.message ?? e);
    }
  };
}

function showBound() {
  const b = boundValue(rho());
  $("bound").textContent = `bound = ${b.toFixed(4)} ${b <= 1 ? "(admissible)" : "(too large)"}`;
}

function drawField() {
  const canvas = $("field");
  const n = 128;
  const f = densityField(rho(), n);
  const max = Math.max(...f);
  const img = new ImageData(n, n);
  for (let k = 0; k < f.length; k++) {
    const t = f[k] / max;
    img.data[4 * k] = 255 * t;
    img.data[4 * k + 1] = 255 * t * t;
    img.data[4 * k + 2] = 255 * (1 - t);
    img.data[4 * k + 3] = 255;
  }
  const tmp = new OffscreenCanvas(n, n);
  tmp.getContext("2d").putImageData(img, 0, 0);
  const ctx = canvas.getContext("2d");
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(tmp, 0, 0, canvas.width, canvas.height);
}

function runSummary() {
  const s = JSON.parse(correlationSummary(rho(), Number($("grid").value)));
  const rows = [
    ["Pearson", s.pearson],
    ["R (analytic)", s.maxcorr_analytic],
    ["R (SVD)", s.maxcorr_svd],
    ["R (ACE)", s.maxcorr_ace],
    ["gap", s.gap],
    ["slope a₁", s.a1],
    ["slope b₁", s.b1],
    ["singular values", s.spectrum.slice(0, 5).map((v) => v.toFixed(4)).join(" ")],
  ];
  $("summary").innerHTML = rows
    .map(([k, v]) => `<tr><td>${k}</td><td>${typeof v === "number" ? v.toFixed(6) : v}</td></tr>`)
    .join("");
}

function runSample() {
  const count = Number($("count").value);
  const pts = samplePoints(rho(), count, BigInt($("seed").value));
  const canvas = $("scatter");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.fillStyle = "rgba(20, 60, 160, 0.35)";
  for (let k = 0; k < pts.length; k += 2) {
    ctx.fillRect(pts[k] * canvas.width, (1 - pts[k + 1]) * canvas.height, 2, 2);
  }
  $("rate").textContent = `${count} points`;
}

await init();
$("rho").addEventListener("input", guard(showBound));
$("draw-field").addEventListener("click", guard(drawField));
$("run-summary").addEventListener("click", guard(runSummary));
$("run-sample").addEventListener("click", guard(runSample));
guard(showBound)();
guard(drawField)();
