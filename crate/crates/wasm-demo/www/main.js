import init, { dateCore, gapYears, sdePaths } from "./pkg/icechron_wasm.js";

function settings(section) {
  const out = {};
  for (const el of section.querySelectorAll("input")) {
    if (el.type === "checkbox") out[el.name] = el.checked;
    else if (el.value !== "") out[el.name] = Number(el.value);
  }
  return out;
}

function plotArea(canvas, xr, yr) {
  const ctx = canvas.getContext("2d");
  const pad = 36;
  const w = canvas.width - 2 * pad;
  const h = canvas.height - 2 * pad;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, w, h);
  ctx.fillStyle = "#555";
  ctx.font = "11px sans-serif";
  ctx.fillText(xr[0].toFixed(2), pad, canvas.height - 12);
  ctx.fillText(xr[1].toFixed(2), pad + w - 30, canvas.height - 12);
  ctx.fillText(yr[1].toFixed(2), 2, pad + 4);
  ctx.fillText(yr[0].toFixed(2), 2, pad + h);
  const x = (v) => pad + ((v - xr[0]) / (xr[1] - xr[0] || 1)) * w;
  const y = (v) => pad + h - ((v - yr[0]) / (yr[1] - yr[0] || 1)) * h;
  return { ctx, x, y, top: pad, bottom: pad + h };
}

function line(p, xs, ys, color, width = 1) {
  p.ctx.strokeStyle = color;
  p.ctx.lineWidth = width;
  p.ctx.beginPath();
  xs.forEach((v, i) => (i ? p.ctx.lineTo(p.x(v), p.y(ys[i])) : p.ctx.moveTo(p.x(v), p.y(ys[i]))));
  p.ctx.stroke();
  p.ctx.lineWidth = 1;
}

const extent = (vs) => [Math.min(...vs), Math.max(...vs)];

function drawDate(canvas, r) {
  const p = plotArea(canvas, extent(r.depths), extent(r.proxy));
  for (const l of r.layers) {
    p.ctx.fillStyle = "rgba(70, 130, 180, 0.25)";
    p.ctx.fillRect(p.x(l.q05), p.top, Math.max(1, p.x(l.q95) - p.x(l.q05)), p.bottom - p.top);
  }
  line(p, r.depths, r.proxy, "#333");
  p.ctx.strokeStyle = "#c0392b";
  for (const d of r.true_boundaries) {
    p.ctx.beginPath();
    p.ctx.moveTo(p.x(d), p.bottom);
    p.ctx.lineTo(p.x(d), p.bottom - 12);
    p.ctx.stroke();
  }
}

function drawGap(canvas, r) {
  const years = r.elapsed.map((e) => e[0]);
  const lo = Math.min(...years, r.true_elapsed) - 1;
  const hi = Math.max(...years, r.true_elapsed) + 1;
  const p = plotArea(canvas, [lo, hi], [0, 1]);
  const bw = (p.x(lo + 1) - p.x(lo)) * 0.7;
  for (const [k, prob] of r.elapsed) {
    p.ctx.fillStyle = k === r.true_elapsed ? "#c0392b" : "steelblue";
    p.ctx.fillRect(p.x(k) - bw / 2, p.y(prob), bw, p.bottom - p.y(prob));
    p.ctx.fillStyle = "#333";
    p.ctx.fillText(String(k), p.x(k) - 4, p.bottom + 12);
  }
}

function drawSde(canvas, r) {
  const all = r.times.flat().concat(r.proxy_time);
  const p = plotArea(canvas, extent(r.depths), extent(all));
  for (const t of r.times) line(p, r.depths, t, "rgba(70, 130, 180, 0.6)");
  line(p, r.depths, r.proxy_time, "#c0392b", 2);
}

function wire(id, op, draw, summary) {
  const section = document.getElementById(id);
  const out = section.querySelector(".out");
  section.querySelector("button").addEventListener("click", () => {
    out.className = "out";
    out.textContent = "working...";
    setTimeout(() => {
      try {
        const r = JSON.parse(op(JSON.stringify(settings(section))));
        draw(section.querySelector("canvas"), r);
        out.textContent = summary(r);
      } catch (e) {
        out.className = "out err";
        out.textContent = String(e.message || e);
      }
    }, 0);
  });
}

await init();

wire("date", dateCore, drawDate, (r) =>
  `true years ${r.true_years}, inferred ${r.years[0]} (90%: ${r.years[1]}-${r.years[2]}); ` +
  `a ${r.a.toFixed(2)}, sigma ${r.sigma.toFixed(2)}, log-likelihood ${r.loglik.toFixed(1)}`);

wire("gap", gapYears, drawGap, (r) =>
  `gap ${r.gap_upper.toFixed(2)}-${r.gap_lower.toFixed(2)} m, true years inside ${r.true_elapsed}, ` +
  r.elapsed.filter((e) => e[1] >= 0.01).map((e) => `${e[0]}: ${e[1].toFixed(2)}`).join(", "));

wire("sde", sdePaths, drawSde, (r) =>
  `${r.times.length} paths to depth ${r.depths[r.depths.length - 1].toFixed(1)} m; red drives the proxy series`);
