import init, { Demo } from "./pkg/corrnet_demo.js";

const $ = (id) => document.getElementById(id);
const canvas = $("view");
const ctx = canvas.getContext("2d");

let demo = null;
let geo = null;
let samples = [];
let group = [];
let center = -1;
let transfer = null;
let yaw = 0.6, pitch = -0.3;
let screen = [];

function generate() {
  if (demo) demo.free();
  demo = new Demo(BigInt($("seed").value), Number($("segments").value));
  geo = {
    bone: demo.bone(),
    bonePost: demo.bone_post(),
    skin: demo.skin(),
    segments: demo.segments(),
    truth: demo.skin_truth(),
  };
  center = -1;
  group = [];
  resample();
  retransfer();
}

function resample() {
  $("kv").textContent = $("k").value;
  samples = Array.from(demo.fps(Number($("k").value)));
  regroup();
}

function regroup() {
  $("rv").textContent = $("radius").value;
  group = center < 0 ? [] : Array.from(demo.ball(center, Number($("radius").value), 64));
  draw();
}

function retransfer() {
  $("hv").textContent = $("h").value;
  transfer = demo.transfer(Number($("h").value));
  let worst = 0, sum = 0;
  const n = transfer.length / 3;
  for (let i = 0; i < n; i++) {
    const e = gap(i);
    worst = Math.max(worst, e);
    sum += e;
  }
  $("status").textContent =
    `${geo.bone.length / 3} bone / ${n} skin vertices\n` +
    `largest segment rotation ${demo.max_rotation().toFixed(1)} deg\n` +
    `gap to dataset movement: mean ${(sum / n).toFixed(3)} mm, max ${worst.toFixed(3)} mm`;
  draw();
}

function gap(i) {
  const dx = transfer[3 * i] - geo.truth[3 * i];
  const dy = transfer[3 * i + 1] - geo.truth[3 * i + 1];
  const dz = transfer[3 * i + 2] - geo.truth[3 * i + 2];
  return Math.hypot(dx, dy, dz);
}

function project(x, y, z) {
  const cy = Math.cos(yaw), sy = Math.sin(yaw), cp = Math.cos(pitch), sp = Math.sin(pitch);
  const x1 = cy * x + sy * y;
  const y1 = -sy * x + cy * y;
  const z2 = cp * z - sp * y1;
  const depth = sp * z + cp * y1;
  const s = Math.min(canvas.width, canvas.height) / 190;
  return [canvas.width / 2 + s * x1, canvas.height / 2 - s * z2, depth];
}

const segColors = ["#888", "#e9a23b", "#5ab4e5", "#9c6ade"];

function heat(t) {
  t = Math.max(0, Math.min(1, t));
  return `rgb(${Math.round(255 * t)},${Math.round(200 * (1 - Math.abs(2 * t - 1)))},${Math.round(255 * (1 - t))})`;
}

function draw() {
  if (!geo) return;
  canvas.width = canvas.clientWidth;
  canvas.height = canvas.clientHeight;
  ctx.fillStyle = "#111";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  const post = $("post").checked;
  const dots = [];
  const bone = post ? geo.bonePost : geo.bone;
  for (let i = 0; i < bone.length / 3; i++) {
    const p = project(bone[3 * i], bone[3 * i + 1], bone[3 * i + 2]);
    dots.push([p, segColors[geo.segments[i] % 4], 1.6]);
  }
  for (let i = 0; i < geo.skin.length / 3; i++) {
    let x = geo.skin[3 * i], y = geo.skin[3 * i + 1], z = geo.skin[3 * i + 2];
    if (post) { x += transfer[3 * i]; y += transfer[3 * i + 1]; z += transfer[3 * i + 2]; }
    dots.push([project(x, y, z), heat(gap(i) / 2), 1.2]);
  }
  dots.sort((a, b) => a[0][2] - b[0][2]);
  for (const [p, c, r] of dots) {
    ctx.fillStyle = c;
    ctx.fillRect(p[0] - r, p[1] - r, 2 * r, 2 * r);
  }
  screen = [];
  for (const i of samples) {
    const p = project(bone[3 * i], bone[3 * i + 1], bone[3 * i + 2]);
    screen.push([i, p]);
    ctx.fillStyle = i === center ? "#fff" : "#f33";
    ctx.beginPath();
    ctx.arc(p[0], p[1], 3, 0, 2 * Math.PI);
    ctx.fill();
  }
  ctx.strokeStyle = "#7f7";
  for (const i of group) {
    const p = project(bone[3 * i], bone[3 * i + 1], bone[3 * i + 2]);
    ctx.beginPath();
    ctx.arc(p[0], p[1], 4, 0, 2 * Math.PI);
    ctx.stroke();
  }
}

let drag = null;
canvas.addEventListener("pointerdown", (e) => { drag = { x: e.offsetX, y: e.offsetY, moved: false }; });
canvas.addEventListener("pointermove", (e) => {
  if (!drag) return;
  const dx = e.offsetX - drag.x, dy = e.offsetY - drag.y;
  if (Math.abs(dx) + Math.abs(dy) > 2) drag.moved = true;
  yaw += dx * 0.01;
  pitch = Math.max(-1.5, Math.min(1.5, pitch + dy * 0.01));
  drag.x = e.offsetX;
  drag.y = e.offsetY;
  draw();
});
canvas.addEventListener("pointerup", (e) => {
  if (drag && !drag.moved) {
    let best = -1, bestD = 64;
    for (const [i, p] of screen) {
      const d = (p[0] - e.offsetX) ** 2 + (p[1] - e.offsetY) ** 2;
      if (d < bestD) { bestD = d; best = i; }
    }
    center = best;
    regroup();
  }
  drag = null;
});

$("generate").onclick = generate;
$("k").oninput = resample;
$("radius").oninput = regroup;
$("h").oninput = retransfer;
$("post").onchange = draw;
window.onresize = draw;

await init();
generate();
