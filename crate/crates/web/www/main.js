import init, { resolventCurve, energyTrace, sphereRatios } from "./pkg/tubewave_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

// Log-log plot of the samples with the fitted line dashed.
function plot(canvas, curve) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const pad = 40;
  ctx.clearRect(0, 0, w, h);
  const lx = Array.from(curve.xs, Math.log10);
  const ly = Array.from(curve.ys, Math.log10);
  const [x0, x1] = [Math.min(...lx), Math.max(...lx)];
  const [y0, y1] = [Math.min(...ly), Math.max(...ly)];
  const sx = (x) => pad + ((x - x0) / (x1 - x0 || 1)) * (w - 2 * pad);
  const sy = (y) => h - pad - ((y - y0) / (y1 - y0 || 1)) * (h - 2 * pad);

  ctx.strokeStyle = "#888";
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  ctx.fillStyle = "#444";
  ctx.fillText(`10^${x0.toFixed(2)}`, pad, h - pad + 15);
  ctx.fillText(`10^${x1.toFixed(2)}`, w - pad - 50, h - pad + 15);
  ctx.fillText(`10^${y1.toFixed(2)}`, 2, pad + 4);
  ctx.fillText(`10^${y0.toFixed(2)}`, 2, h - pad);

  const n = lx.length;
  const mx = lx.reduce((a, b) => a + b, 0) / n;
  const my = ly.reduce((a, b) => a + b, 0) / n;
  ctx.setLineDash([5, 4]);
  ctx.strokeStyle = "#c33";
  ctx.beginPath();
  ctx.moveTo(sx(x0), sy(my + curve.exponent * (x0 - mx)));
  ctx.lineTo(sx(x1), sy(my + curve.exponent * (x1 - mx)));
  ctx.stroke();
  ctx.setLineDash([]);

  ctx.fillStyle = "#236";
  for (let i = 0; i < n; i++) {
    ctx.beginPath();
    ctx.arc(sx(lx[i]), sy(ly[i]), n > 60 ? 1.5 : 3, 0, 2 * Math.PI);
    ctx.fill();
  }
}

function report(out, curve) {
  const pred = Number.isNaN(curve.predicted) ? "" : `, predicted ${curve.predicted.toFixed(3)}`;
  out.textContent = `slope ${curve.exponent.toFixed(3)}${pred}, r² ${curve.rSquared.toFixed(4)}`;
}

function wire(button, canvas, out, compute) {
  $(button).addEventListener("click", () => {
    $(out).textContent = "running…";
    // let the status text paint before the blocking call
    setTimeout(() => {
      try {
        const curve = compute();
        plot($(canvas), curve);
        report($(out), curve);
        curve.free();
      } catch (e) {
        $(out).textContent = `error: ${e.message ?? e}`;
      }
    }, 10);
  });
}

await init();
wire("r-run", "r-plot", "r-out", () => resolventCurve(num("r-gamma"), num("r-hmin"), num("r-hmax"), num("r-points")));
wire("w-run", "w-plot", "w-out", () => energyTrace(num("w-gamma"), num("w-res"), num("w-t")));
wire("s-run", "s-plot", "s-out", () => sphereRatios(num("s-d"), num("s-delta"), BigInt(num("s-n"))));
