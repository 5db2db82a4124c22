// Static page driver for the wavelab wasm demo. No framework: plain canvas
// plotting and direct calls into the wasm module built by wasm-bindgen.
//
// Build the module first (see the repository README):
//   cargo build -p wavelab-wasm --target wasm32-unknown-unknown --release
//   wasm-bindgen --target web --out-dir crates/wavelab-wasm/www/pkg \
//     target/wasm32-unknown-unknown/release/wavelab_wasm.wasm

import init, { Lab, exponent_report } from "./pkg/wavelab_wasm.js";

const $ = (id) => document.getElementById(id);

// ---- tiny canvas plotting ----------------------------------------------

function plot(canvas, seriesList, opts = {}) {
  const ctx = canvas.getContext("2d");
  const W = canvas.width, H = canvas.height, pad = 34;
  ctx.clearRect(0, 0, W, H);
  let xmin = Infinity, xmax = -Infinity, ymin = Infinity, ymax = -Infinity;
  for (const s of seriesList) {
    for (let i = 0; i < s.x.length; i++) {
      if (!isFinite(s.x[i]) || !isFinite(s.y[i])) continue;
      xmin = Math.min(xmin, s.x[i]); xmax = Math.max(xmax, s.x[i]);
      ymin = Math.min(ymin, s.y[i]); ymax = Math.max(ymax, s.y[i]);
    }
  }
  if (!isFinite(xmin)) return;
  if (opts.ymin !== undefined) ymin = opts.ymin;
  if (opts.ymax !== undefined) ymax = opts.ymax;
  if (ymax - ymin < 1e-12) { ymax += 1; ymin -= 1; }
  const sx = (x) => pad + (x - xmin) / (xmax - xmin) * (W - 2 * pad);
  const sy = (y) => H - pad - (y - ymin) / (ymax - ymin) * (H - 2 * pad);

  ctx.strokeStyle = "#d8dee6"; ctx.lineWidth = 1;
  ctx.strokeRect(pad, pad, W - 2 * pad, H - 2 * pad);
  ctx.fillStyle = "#5b6b7c"; ctx.font = "11px ui-monospace, monospace";
  ctx.fillText(xmin.toFixed(2), pad, H - pad + 14);
  ctx.fillText(xmax.toFixed(2), W - pad - 30, H - pad + 14);
  ctx.fillText(ymax.toPrecision(3), 2, pad + 4);
  ctx.fillText(ymin.toPrecision(3), 2, H - pad);
  if (opts.title) { ctx.fillStyle = "#1c2733"; ctx.fillText(opts.title, pad, pad - 8); }

  let legendY = pad + 12;
  for (const s of seriesList) {
    ctx.strokeStyle = s.color; ctx.lineWidth = s.width || 1.4;
    ctx.beginPath();
    let started = false;
    for (let i = 0; i < s.x.length; i++) {
      if (!isFinite(s.y[i])) { started = false; continue; }
      const px = sx(s.x[i]), py = sy(s.y[i]);
      if (!started) { ctx.moveTo(px, py); started = true; } else ctx.lineTo(px, py);
    }
    ctx.stroke();
    if (s.label) {
      ctx.fillStyle = s.color;
      ctx.fillText(s.label, W - pad - 120, legendY);
      legendY += 13;
    }
  }
  if (opts.vline !== undefined && opts.vline >= xmin && opts.vline <= xmax) {
    ctx.strokeStyle = "#b4432f"; ctx.setLineDash([4, 3]);
    ctx.beginPath(); ctx.moveTo(sx(opts.vline), pad); ctx.lineTo(sx(opts.vline), H - pad); ctx.stroke();
    ctx.setLineDash([]);
  }
  return { sx, sy };
}

// ---- exponent explorer ---------------------------------------------------

function renderExponents() {
  const d = parseInt($("exp-d").value, 10);
  const p = $("exp-p").value.trim();
  const msg = $("exp-msg");
  try {
    const rep = JSON.parse(exponent_report(d, p));
    msg.textContent = rep.admissible ? "1-admissible pair" : "NOT admissible";
    msg.className = rep.admissible ? "readout" : "readout bad";
    const rows = [
      ["p", rep.p], ["p_e", rep.p_e], ["s_p", rep.s_p], ["q", rep.q], ["r", rep.r],
      ["k1", rep.k1], ["k2", rep.k2], ["kappa1", rep.kappa1], ["kappa2", rep.kappa2],
    ];
    $("exp-table").innerHTML =
      "<tr>" + rows.map(r => `<th>${r[0]}</th>`).join("") + "</tr>" +
      "<tr>" + rows.map(r => `<td class="mono">${r[1]}</td>`).join("") + "</tr>";

    // the three collinear points in the (1/q, 1/r) plane
    const canvas = $("exp-canvas");
    const ctx = canvas.getContext("2d");
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    const pts = rep.points;
    const pad = 36, W = canvas.width, H = canvas.height;
    const lim = Math.max(...pts.flat()) * 1.25;
    const sx = (x) => pad + x / lim * (W - 2 * pad);
    const sy = (y) => H - pad - y / lim * (H - 2 * pad);
    ctx.strokeStyle = "#d8dee6";
    ctx.strokeRect(pad, pad, W - 2 * pad, H - 2 * pad);
    ctx.fillStyle = "#5b6b7c"; ctx.font = "11px ui-monospace, monospace";
    ctx.fillText("1/q", W - pad - 10, H - pad + 14);
    ctx.fillText("1/r", 6, pad);
    ctx.strokeStyle = "#1c2733"; ctx.lineWidth = 1.2;
    ctx.beginPath(); ctx.moveTo(sx(pts[0][0]), sy(pts[0][1])); ctx.lineTo(sx(pts[2][0]), sy(pts[2][1])); ctx.stroke();
    const names = ["(1/(p+1), 1/(p+1))", "(1/q, 1/r)", "(1/p, 1/2p)"];
    pts.forEach((pt, i) => {
      ctx.fillStyle = i === 1 ? "#b4432f" : "#1c2733";
      ctx.beginPath(); ctx.arc(sx(pt[0]), sy(pt[1]), 4, 0, 7); ctx.fill();
      ctx.fillText(names[i], sx(pt[0]) + 6, sy(pt[1]) - 6);
    });
  } catch (e) {
    msg.textContent = String(e);
    msg.className = "readout bad";
  }
}

// ---- live simulation -------------------------------------------------------

let lab = null;
let running = false;
let profileHistory = [];

function resetLab() {
  const p = parseFloat($("sim-p").value);
  const a = parseFloat($("sim-a").value);
  const R = parseFloat($("sim-r").value);
  const scheme = $("sim-scheme").value;
  try {
    lab = new Lab(p, a, scheme, R);
    profileHistory = [];
    $("rad-msg").textContent = "";
    $("rad-readout").textContent = "";
    drawSim();
    drawProfiles();
    $("sim-readout").textContent = "ready — press run";
  } catch (e) {
    $("sim-readout").textContent = String(e);
  }
}

function drawSim() {
  if (!lab) return;
  const r = Array.from(lab.field_r(400));
  const u = Array.from(lab.field_u(400));
  plot($("sim-field"), [{ x: r, y: u, color: "#1c2733", label: "u(r)" }],
    { title: `field at t = ${lab.t().toFixed(2)}`, vline: lab.cone_radius(), ymin: -2.2, ymax: 2.2 });

  const s = JSON.parse(lab.series_json());
  plot($("sim-series"), [
    { x: s.t, y: s.e_ext, color: "#1c2733", label: "E_ext(t; R)" },
    { x: s.t, y: s.phi, color: "#2d6a4f", label: "flux Φ(0→t)" },
    { x: s.t, y: s.energy, color: "#8a8f98", label: "discrete energy" },
  ], { title: "exterior energy and accumulated cone flux" });

  const closure = s.closure.length ? s.closure[s.closure.length - 1] : 0;
  $("sim-readout").textContent =
    `t = ${lab.t().toFixed(2)} / budget ${lab.t_budget().toFixed(1)}   ` +
    `E = ${lab.energy_total().toFixed(4)}   ` +
    `energy drift = ${lab.energy_drift().toExponential(2)}   ` +
    `flux closure |E_ext(0)-E_ext(t)-Φ| = ${closure.toExponential(2)}`;
}

function tick() {
  if (!running || !lab) return;
  const taken = lab.advance(16);
  drawSim();
  if (taken === 0) { running = false; $("sim-readout").textContent += "   (causality budget reached)"; }
  else requestAnimationFrame(tick);
}

// ---- radiation panel -------------------------------------------------------

function drawProfiles() {
  const shades = ["#c6cdd6", "#8a97a6", "#4d6075", "#1c2733"];
  const series = profileHistory.map((p, i) => ({
    x: p.R, y: p.g, color: shades[Math.min(i, shades.length - 1)],
    label: `g at t=${p.t.toFixed(1)}`,
  }));
  plot($("rad-profiles"), series, { title: "outgoing profiles g_t(R) = (t+R) u_t" });
}

function sampleProfile() {
  if (!lab) return;
  try {
    const p = JSON.parse(lab.snapshot_profile());
    profileHistory.push(p);
    if (profileHistory.length > 4) profileHistory.shift();
    drawProfiles();
    const d = lab.last_cauchy_distance();
    $("rad-msg").textContent =
      `${lab.profile_count()} profiles stored` +
      (isFinite(d) ? `, last Cauchy distance ${d.toExponential(2)}` : "");
  } catch (e) {
    $("rad-msg").textContent = String(e);
  }
}

function extract() {
  if (!lab) return;
  try {
    const rep = JSON.parse(lab.extract_json());
    const r = Array.from(lab.field_r(300));
    const u = Array.from(lab.field_u(300));
    plot($("rad-compare"), [
      { x: r, y: u, color: "#1c2733", label: "u(r, t)" },
      { x: r.slice(0, rep.u_free.length), y: rep.u_free, color: "#b4432f", label: "free wave u_L" },
    ], { title: "solution vs reconstructed free wave", vline: lab.cone_radius() });
    $("rad-readout").textContent =
      `‖G‖² = ${rep.g_norm_sq.toFixed(4)}  ≤  2E = ${rep.two_e.toFixed(4)}\n` +
      `cauchy history: [${rep.cauchy.map(v => v.toExponential(2)).join(", ")}]\n` +
      `exterior scattering residual ∫|∇(u-u_L)|² = ${rep.residual.toExponential(3)}  ` +
      `(${(100 * rep.residual_rel).toFixed(3)}% of E)`;
  } catch (e) {
    $("rad-readout").textContent = String(e);
  }
}

// ---- wiring ---------------------------------------------------------------

async function main() {
  await init();
  renderExponents();
  $("exp-go").addEventListener("click", renderExponents);
  $("exp-p").addEventListener("change", renderExponents);
  $("exp-d").addEventListener("change", renderExponents);

  for (const [slider, label, fmt] of [
    ["sim-p", "sim-p-val", (v) => v.toFixed(1)],
    ["sim-a", "sim-a-val", (v) => v.toFixed(1)],
    ["sim-r", "sim-r-val", (v) => v.toFixed(1)],
  ]) {
    $(slider).addEventListener("input", () => { $(label).textContent = fmt(parseFloat($(slider).value)); });
  }
  $("sim-reset").addEventListener("click", () => { running = false; resetLab(); });
  $("sim-toggle").addEventListener("click", () => {
    running = !running;
    if (running) requestAnimationFrame(tick);
  });
  $("rad-sample").addEventListener("click", sampleProfile);
  $("rad-extract").addEventListener("click", extract);
  resetLab();
}

main();
