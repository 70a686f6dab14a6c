import init, { Demo } from "./pkg/unroll_demo.js";

const SIZE = 96;
const $ = (id) => document.getElementById(id);
const status = (msg) => { $("status").textContent = msg; };

function paint(canvasId, rgba, size) {
  const canvas = $(canvasId);
  canvas.width = size;
  canvas.height = size;
  const ctx = canvas.getContext("2d");
  ctx.putImageData(new ImageData(new Uint8ClampedArray(rgba), size, size), 0, 0);
}

function bindSlider(id) {
  const el = $(id);
  const label = $(id + "V");
  const update = () => { label.textContent = el.value; };
  el.addEventListener("input", update);
  update();
}

["sigma", "length", "angle", "scale", "noise", "blocks", "tvr", "smooth", "tvz", "mean"]
  .forEach(bindSlider);

const fmt = (v) => (v === "inf" ? "inf" : Number(v).toFixed(2));

async function main() {
  await init();
  let demo = new Demo($("seed").valueAsNumber >>> 0, SIZE);
  paint("scene", demo.scene_rgba(), SIZE);
  status("ready — degrade the scene");

  $("newScene").addEventListener("click", () => {
    demo.new_scene($("seed").valueAsNumber >>> 0);
    paint("scene", demo.scene_rgba(), SIZE);
    $("degraded").getContext("2d").clearRect(0, 0, SIZE, SIZE);
    $("restored").getContext("2d").clearRect(0, 0, SIZE, SIZE);
    $("metrics").textContent = "";
    $("trace").innerHTML = "";
    $("restore").disabled = true;
    status("new scene — degrade it");
  });

  $("degrade").addEventListener("click", () => {
    try {
      const rgba = demo.degrade(
        $("kind").value,
        Number($("sigma").value),
        Number($("length").value),
        Number($("angle").value),
        21,
        Number($("scale").value),
        1.0,
        Number($("noise").value),
        $("seed").valueAsNumber >>> 0,
      );
      paint("degraded", rgba, SIZE);
      $("restore").disabled = false;
      status("degraded — now restore");
    } catch (e) {
      status("degrade failed: " + e);
    }
  });

  $("restore").addEventListener("click", () => {
    status("solving…");
    $("restore").disabled = true;
    // let the status repaint before the solver blocks the thread
    setTimeout(() => {
      try {
        const rgba = demo.restore(
          Number($("blocks").value),
          $("literal").checked,
          Number($("tvr").value),
          Number($("smooth").value),
          Number($("tvz").value),
          Number($("mean").value),
        );
        paint("restored", rgba, SIZE);
        const m = JSON.parse(demo.metrics_json());
        $("metrics").textContent =
          `baseline  ${fmt(m.baseline_psnr)} dB  ssim ${Number(m.baseline_ssim).toFixed(3)}\n` +
          `restored  ${fmt(m.restored_psnr)} dB  ssim ${Number(m.restored_ssim).toFixed(3)}\n` +
          `gain      ${fmt(m.gain_db)} dB`;
        const rows = m.trace.map((t) =>
          `<tr><td>${t.block}</td><td>${t.resid_rp.toExponential(2)}</td>` +
          `<td>${t.resid_lq.toExponential(2)}</td><td>${t.resid_iz.toExponential(2)}</td></tr>`).join("");
        $("trace").innerHTML =
          `<table><tr><th>block</th><th>|R−P|</th><th>|L−Q|</th><th>|I−Z|</th></tr>${rows}</table>`;
        status("done");
      } catch (e) {
        status("restore failed: " + e);
      } finally {
        $("restore").disabled = false;
      }
    }, 30);
  });
}

main().catch((e) => status("failed to load wasm: " + e));
