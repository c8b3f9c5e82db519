#include "dielinv/pipeline.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <sstream>

#include "dielinv/io.hpp"
#include "dielinv/synth.hpp"

namespace dielinv {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

const char* to_string(Stage s) {
  switch (s) {
    case Stage::Simulate: return "simulate";
    case Stage::Preprocess: return "preprocess";
    case Stage::Invert: return "invert";
    case Stage::Full: return "full";
  }
  return "full";
}

Stage stage_from_string(const std::string& s) {
  if (s == "simulate") return Stage::Simulate;
  if (s == "preprocess") return Stage::Preprocess;
  if (s == "invert") return Stage::Invert;
  if (s == "full") return Stage::Full;
  throw InvalidArgument("unknown command '" + s + "' (expected simulate, preprocess, invert or full)");
}

std::string RunManifest::to_json() const {
  ojson doc;
  doc["config_hash"] = config_hash;
  doc["seed"] = seed;
  ojson st = ojson::object();
  for (const auto& [name, rec] : stages) {
    ojson e;
    e["status"] = rec.status;
    e["params_hash"] = rec.params_hash;
    e["outputs"] = rec.outputs;
    if (!rec.error.empty()) e["error"] = rec.error;
    st[name] = std::move(e);
  }
  doc["stages"] = std::move(st);
  doc["failed_stage"] = failed_stage.empty() ? nullptr : ojson(failed_stage);
  return doc.dump(2) + "\n";
}

namespace {

std::uint64_t fnv(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

double t1_of(const PipelineConfig& cfg) { return 2.0 * std::numbers::pi / cfg.acquisition.omega; }

std::vector<double> sample_points(const PipelineConfig& cfg) {
  return psi_sample_points(cfg.inversion.pseudo, cfg.inversion.pseudo.h / 4.0);
}

// Transform of the forward solution for `eps` (on G) on the backscatter face.
ForwardResult face_transform(const ScalarField3& eps, const PipelineConfig& cfg, const Domains& dom) {
  ForwardConfig fc{dom.G, eps};
  fc.omega = cfg.acquisition.omega;
  fc.dt = cfg.acquisition.dt;
  fc.final_time = cfg.inversion.final_time;
  fc.laplace_s = sample_points(cfg);
  IndexBox box = box_of(dom.G, dom.omega);
  box.lo[2] = box.hi[2];
  fc.laplace_region = box;
  return run_forward(fc);
}

std::vector<double> homogeneous_face(const ForwardResult& h, std::size_t q, const Domains& dom) {
  const auto& c = dom.omega.counts();
  std::vector<double> out(c[0] * c[1]);
  for (std::size_t i = 0; i < c[0]; ++i)
    for (std::size_t j = 0; j < c[1]; ++j) out[i * c[1] + j] = h.laplace[q][dom.omega.linear(i, j, c[2] - 1)];
  return out;
}

std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t which) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(which), 0x5eedu};
  std::array<std::uint32_t, 2> v{};
  seq.generate(v.begin(), v.end());
  return (static_cast<std::uint64_t>(v[0]) << 32) | v[1];
}

std::string raw_meta_json(const RawMeasurement& m) {
  ojson doc;
  doc["seed"] = m.seed;
  doc["injected_offset"] = m.injected_offset;
  doc["noise_sigma"] = m.noise_sigma;
  doc["injected_shift"] = m.injected_shift;
  doc["injected_gain"] = m.injected_gain;
  return doc.dump(2) + "\n";
}

void apply_thread_env() {
#ifdef _OPENMP
  if (const char* t = std::getenv("DIELINV_THREADS")) {
    const int n = std::atoi(t);
    if (n > 0) omp_set_num_threads(n);
  }
#endif
}

// ---- stages ----

std::vector<std::string> stage_simulate(const PipelineConfig& cfg, const fs::path& out) {
  const fs::path dir = out / "simulate";
  const AcquisitionConfig& ac = cfg.acquisition;
  const Grid3 ag = ac.grid();
  const Domains dom = standard_domains(cfg.inversion.spacing);

  spdlog::info("simulating scene '{}' on a {}x{}x{} acquisition grid", cfg.scene.id, ag.counts()[0], ag.counts()[1],
               ag.counts()[2]);
  const TraceCube homog = simulate_acquisition(ScalarField3(ag, 1.0), ac);
  const TargetScene diel = preset_scene(cfg.dielectric_calibrator);
  const TargetScene metal = preset_scene(cfg.metallic_calibrator);
  const TraceCube diel_clean = simulate_acquisition(generate_scene(diel, ag), ac);
  // Noise reference: strongest scattered amplitude of the dielectric calibrator.
  double ref = 0.0;
  for (std::size_t n = 0; n < homog.data().size(); ++n)
    ref = std::max(ref, std::abs(diel_clean.data()[n] - homog.data()[n]));

  std::vector<std::string> outputs;
  auto emit_raw = [&](const std::string& name, const TraceCube& clean, std::uint64_t which) {
    const RawMeasurement m = corrupt(clean, cfg.corruption, ac, ref, sub_seed(cfg.seed, which));
    io::write_trace_cube(dir / (name + ".trcb"), m.cube);
    io::write_text(dir / (name + ".json"), raw_meta_json(m));
    outputs.push_back("simulate/" + name + ".trcb");
    outputs.push_back("simulate/" + name + ".json");
  };
  const TraceCube target_clean =
      cfg.scene.targets.empty() ? homog : simulate_acquisition(generate_scene(cfg.scene, ag), ac);
  emit_raw("raw_target", target_clean, 0);
  emit_raw("raw_dielectric_calibrator", diel_clean, 1);
  emit_raw("raw_metallic_calibrator", simulate_acquisition(generate_scene(metal, ag), ac), 2);

  io::write_text(dir / "scene.json", scene_to_json(cfg.scene));
  io::write_structured_points(dir / "eps_true.vtk", generate_scene(cfg.scene, dom.G));
  outputs.push_back("simulate/scene.json");
  outputs.push_back("simulate/eps_true.vtk");
  return outputs;
}

std::string preprocess_json(const PreprocessOutput& p) {
  ojson doc;
  doc["target_class"] = to_string(p.target_class);
  doc["amplitude"] = p.classification.amplitude;
  doc["ratio"] = p.classification.ratio;
  doc["low_confidence"] = p.classification.low_confidence;
  doc["z_front"] = p.z_front ? ojson(*p.z_front) : ojson(nullptr);
  doc["n_detected"] = p.n_detected;
  doc["n_flagged"] = p.n_flagged;
  return doc.dump(2) + "\n";
}

PreprocessOutput load_preprocess(const fs::path& dir) {
  PreprocessOutput p{PseudoFreqSeries::read_csv(dir / "w_total.csv")};
  try {
    const auto doc = nlohmann::json::parse(io::read_text(dir / "preprocess.json"));
    p.target_class = target_class_from_string(doc.at("target_class").get<std::string>());
    p.classification = {p.target_class, doc.at("amplitude").get<double>(), doc.at("ratio").get<double>(),
                        doc.at("low_confidence").get<bool>()};
    if (!doc.at("z_front").is_null()) p.z_front = doc.at("z_front").get<double>();
    p.n_detected = doc.at("n_detected").get<std::size_t>();
    p.n_flagged = doc.at("n_flagged").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed preprocess.json: ") + e.what());
  }
  p.calibration = calibration_from_json(io::read_text(dir / "calibration.json"));
  return p;
}

std::vector<std::string> stage_preprocess(const PipelineConfig& cfg, const fs::path& out) {
  const fs::path in = out / "simulate";
  const fs::path dir = out / "preprocess";
  for (const char* f : {"raw_target.trcb", "raw_dielectric_calibrator.trcb", "raw_metallic_calibrator.trcb"})
    if (!fs::exists(in / f)) throw IoError("missing input " + (in / f).string() + " (run simulate first)");
  const Domains dom = standard_domains(cfg.inversion.spacing);

  const ProcessedCube target = process_measurement(io::read_trace_cube(in / "raw_target.trcb"), cfg);
  const ProcessedCube diel = process_measurement(io::read_trace_cube(in / "raw_dielectric_calibrator.trcb"), cfg);

  PreprocessOutput p{PseudoFreqSeries(target.propagated.cube.xy(), sample_points(cfg))};
  p.classification = classify_target(target.extracted.cube, sensitive_amplitude(diel.extracted.cube));
  p.target_class = p.classification.target_class;
  p.z_front = estimate_front(target.extracted);
  p.n_detected = target.extracted.n_detected;
  p.n_flagged = target.time_zero.n_flagged;
  spdlog::info("target classified {} (amplitude ratio {:.3f}); {} detectors saw it", to_string(p.target_class),
               p.classification.ratio, p.n_detected);

  // Calibration against the class-matched calibrator.
  const bool metallic = p.target_class == TargetClass::Metallic;
  const std::string cal_name = metallic ? cfg.metallic_calibrator : cfg.dielectric_calibrator;
  const ProcessedCube cal =
      metallic ? process_measurement(io::read_trace_cube(in / "raw_metallic_calibrator.trcb"), cfg) : diel;
  const std::vector<double> s = sample_points(cfg);
  const PseudoFreqSeries w_exp = laplace_of_cube(cal.propagated.cube, s);
  const PseudoFreqSeries w_tgt = laplace_of_cube(target.propagated.cube, s);
  const ForwardResult sim = face_transform(generate_scene(preset_scene(cal_name), dom.G), cfg, dom);
  const auto homog = homogeneous_over_omega(cfg, dom);

  p.calibration.calibrator = cal_name;
  p.calibration.target_class = p.target_class;
  for (std::size_t q = 0; q < s.size(); ++q) {
    const std::vector<double> wi = homogeneous_face(*homog, q, dom);
    std::vector<double> ws = sim.laplace[q];
    for (std::size_t n = 0; n < ws.size(); ++n) ws[n] -= wi[n];
    const std::vector<double> we = w_exp.plane(q);
    const double f = calibration_factor(ws, we);
    p.calibration.s.push_back(s[q]);
    p.calibration.factor.push_back(f);
    p.calibration.d_sim.push_back(*std::min_element(ws.begin(), ws.end()));
    p.calibration.d_exp.push_back(*std::min_element(we.begin(), we.end()));
    std::vector<double> wt = w_tgt.plane(q);
    for (std::size_t n = 0; n < wt.size(); ++n) wt[n] = wi[n] + f * wt[n];
    p.w_total.set_plane(q, wt);
  }

  p.w_total.write_csv(dir / "w_total.csv");
  io::write_text(dir / "preprocess.json", preprocess_json(p));
  io::write_text(dir / "calibration.json", calibration_to_json(p.calibration));
  io::write_text(dir / "signatures.json", signatures_to_json(target.extracted, target.extracted.cube.xy()));
  io::write_text(dir / "gamma_t.csv", projection_to_csv(gamma_t_from(p.w_total, cfg, dom)));
  io::write_trace_cube(dir / "propagated_target.trcb", target.propagated.cube);
  return {"preprocess/w_total.csv",        "preprocess/preprocess.json", "preprocess/calibration.json",
          "preprocess/signatures.json",    "preprocess/gamma_t.csv",     "preprocess/propagated_target.trcb"};
}

std::string summary_json(const ReconstructionResult& r, const PreprocessOutput& p, const XYProjection& gt) {
  ojson doc;
  doc["mode"] = to_string(r.mode);
  doc["mode_fallback"] = r.mode_fallback;
  doc["target_class"] = to_string(p.target_class);
  doc["no_target"] = r.no_target;
  doc["message"] = r.no_target ? "no target detected" : "target reconstructed";
  doc["max_eps"] = r.max_eps;
  doc["n_comp"] = r.n_comp;
  doc["eps_comp"] = r.eps_comp;
  doc["selected_layer"] = r.selected_layer;
  doc["layers_run"] = r.layers_run;
  if (r.mode == InversionMode::Test1) {
    doc["n1"] = r.test1.n1;
    doc["n2"] = r.test1.n2 ? ojson(*r.test1.n2) : ojson(nullptr);
  } else {
    doc["stop_layer"] = r.stop_layer;
  }
  doc["centroid"] = r.centroid;
  doc["gamma_t_area"] = gt.area;
  doc["gamma_t_bbox"] = {gt.x_min, gt.x_max, gt.y_min, gt.y_max};
  doc["truncation"] = {{"applied", r.truncation.applied},
                       {"z0_index", r.truncation.z0_index},
                       {"gamma", r.truncation.gamma},
                       {"footprint_cells", r.truncation.footprint_cells},
                       {"target_cells", r.truncation.target_cells}};
  return doc.dump(2) + "\n";
}

std::vector<std::string> stage_invert(const PipelineConfig& cfg, const fs::path& out) {
  const fs::path in = out / "preprocess";
  const fs::path dir = out / "invert";
  if (!fs::exists(in / "w_total.csv")) throw IoError("missing " + (in / "w_total.csv").string() + " (run preprocess first)");
  const PreprocessOutput p = load_preprocess(in);
  const Domains dom = standard_domains(cfg.inversion.spacing);
  const InversionInput input = inversion_input(p, cfg, dom);
  const ReconstructionResult r = run_global_reconstruction(cfg.inversion_for(p.target_class), dom, input);

  io::write_structured_points(dir / "eps_rec.vtk", r.eps_rec);
  io::write_structured_points(dir / "eps_trunc.vtk", r.eps_trunc);
  io::write_text(dir / "summary.json", summary_json(r, p, input.gamma_t));
  std::ostringstream norms;
  norms << "n,i,E,D\n";
  for (const auto& nr : r.norms)
    norms << nr.n << ',' << nr.i << ',' << io::format_double(nr.E) << ',' << io::format_double(nr.D) << '\n';
  io::write_text(dir / "norms.csv", norms.str());
  std::vector<std::string> outputs{"invert/eps_rec.vtk", "invert/eps_trunc.vtk", "invert/summary.json",
                                   "invert/norms.csv"};
  if (cfg.emit_plots) {
    std::optional<TargetScene> scene;
    if (fs::exists(out / "simulate" / "scene.json"))
      scene = scene_from_json(io::read_text(out / "simulate" / "scene.json"));
    for (const auto& f : emit_plots(r, input.gamma_t, scene ? &*scene : nullptr, dir / "plots"))
      outputs.push_back("invert/plots/" + f);
  }
  if (r.no_target) spdlog::info("no target detected");
  else spdlog::info("reconstruction: max eps {:.3f}, n = {:.3f}", r.max_eps, r.n_comp);
  return outputs;
}

std::string write_csv_rows(const std::vector<std::vector<double>>& rows, const std::string& header) {
  std::ostringstream os;
  os << header << '\n';
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) os << (c ? "," : "") << io::format_double(r[c]);
    os << '\n';
  }
  return os.str();
}

std::vector<std::vector<double>> footprint_polygon(const TargetScene& s) {
  std::vector<std::vector<double>> out;
  for (std::size_t n = 0; n < s.targets.size(); ++n) {
    const Target& t = s.targets[n];
    const double id = static_cast<double>(n);
    if (t.shape == ShapeKind::Box) {
      const Vec3 l = t.lower(), u = t.upper();
      for (const auto& [x, y] : std::vector<std::pair<double, double>>{
               {l[0], l[1]}, {u[0], l[1]}, {u[0], u[1]}, {l[0], u[1]}, {l[0], l[1]}})
        out.push_back({id, x, y});
    } else {
      for (int k = 0; k <= 64; ++k) {
        const double a = 2.0 * std::numbers::pi * k / 64.0;
        out.push_back({id, t.center[0] + t.dims[0] * std::cos(a), t.center[1] + t.dims[0] * std::sin(a)});
      }
    }
  }
  return out;
}

}  // namespace

ProcessedCube process_measurement(const TraceCube& raw, const PipelineConfig& cfg) {
  const PreprocessConfig& pp = cfg.preprocess;
  const std::size_t nt = raw.n_samples();
  const TraceCube off = offset_correct(raw, std::pair<std::size_t, std::size_t>{0, std::min(pp.baseline_samples, nt)});
  const auto tmpl = direct_template(cfg.acquisition, nt, raw.dt());
  TimeZeroResult tz = time_zero_correct(off, tmpl, pp.time_zero);
  const SourceShiftResult sh = source_shift(tz.cube, pp.source_shift);
  ScatterGeometry geom;
  geom.exclusion_end = exclusion_end(cfg);
  geom.z_source = cfg.acquisition.z_source + pp.source_shift;
  geom.z_measure = cfg.acquisition.z_measure;
  ExtractResult ex = extract_scatter(sh.cube, geom, pp.extract);
  TimeReverseConfig rc = pp.reverse;
  TimeReverseResult tr = time_reverse_propagate(ex.cube, rc);
  return {std::move(tz), std::move(ex), std::move(tr)};
}

double exclusion_end(const PipelineConfig& cfg) {
  const auto& ac = cfg.acquisition;
  double end = (ac.z_source - ac.z_measure) + t1_of(cfg);
  if (cfg.corruption.structure_echo) end += cfg.corruption.echo_delay;
  return std::max(0.0, end + cfg.preprocess.source_shift + cfg.preprocess.exclusion_margin);
}

std::shared_ptr<const ForwardResult> homogeneous_over_omega(const PipelineConfig& cfg, const Domains& dom) {
  ForwardConfig fc{dom.G, ScalarField3(dom.G, 1.0)};
  fc.omega = cfg.acquisition.omega;
  fc.dt = cfg.acquisition.dt;
  fc.final_time = cfg.inversion.final_time;
  fc.laplace_s = sample_points(cfg);
  fc.laplace_region = box_of(dom.G, dom.omega);
  return run_forward_homogeneous(fc);
}

XYProjection gamma_t_from(const PseudoFreqSeries& w_total, const PipelineConfig& cfg, const Domains& dom) {
  const double sbar = cfg.inversion.pseudo.s_hi;
  const std::size_t q = w_total.index_of(sbar);
  const auto homog = homogeneous_over_omega(cfg, dom);
  const std::vector<double> wi = homogeneous_face(*homog, q, dom);
  std::vector<double> wt = w_total.plane(q);
  enforce_positivity(wt);
  std::vector<double> dv(wt.size());
  for (std::size_t n = 0; n < wt.size(); ++n) dv[n] = v_of_w(wt[n], sbar, n) - v_of_w(wi[n], sbar, n);
  return estimate_xy_projection(dv, plane_of(dom.omega), cfg.inversion.projection_threshold);
}

InversionInput inversion_input(const PreprocessOutput& pre, const PipelineConfig& cfg, const Domains& dom) {
  const auto homog = homogeneous_over_omega(cfg, dom);
  PseudoFreqSeries w = pre.w_total;
  enforce_positivity(w.values());
  InversionInput in;
  const double delta = cfg.inversion.pseudo.h / 4.0;
  in.psi = assemble_boundary_psi(w, *homog, dom, cfg.inversion.pseudo, delta);
  const double sbar = cfg.inversion.pseudo.s_hi;
  const std::vector<double> ws = w.plane(w.index_of(sbar));
  in.v_prop.resize(ws.size());
  for (std::size_t n = 0; n < ws.size(); ++n) in.v_prop[n] = v_of_w(ws[n], sbar, n);
  in.gamma_t = gamma_t_from(pre.w_total, cfg, dom);
  in.z_front = pre.z_front;
  return in;
}

std::vector<std::string> emit_plots(const ReconstructionResult& r, const XYProjection& gt, const TargetScene* scene,
                                    const fs::path& dir) {
  std::vector<std::string> files;
  auto put = [&](const std::string& name, const std::string& text) {
    io::write_text(dir / name, text);
    files.push_back(name);
  };
  std::vector<std::vector<double>> first, fin;
  for (std::size_t n = 0; n < r.D_first.size(); ++n) {
    first.push_back({static_cast<double>(n + 1), r.D_first[n]});
    fin.push_back({static_cast<double>(n + 1), r.D_final[n]});
  }
  put("norm_first.csv", write_csv_rows(first, "n,D_first"));
  put("norm_final.csv", write_csv_rows(fin, "n,D_final"));

  const Grid3& g = r.eps_rec.grid();
  const auto& c = g.counts();
  const std::size_t k0 = std::min(r.truncation.z0_index, c[2] - 1);
  std::vector<std::vector<double>> xy, yz;
  for (std::size_t i = 0; i < c[0]; ++i)
    for (std::size_t j = 0; j < c[1]; ++j)
      xy.push_back({g.coord(0, i), g.coord(1, j), r.eps_rec(i, j, k0), r.eps_trunc(i, j, k0)});
  const std::size_t im = c[0] / 2;
  for (std::size_t j = 0; j < c[1]; ++j)
    for (std::size_t k = 0; k < c[2]; ++k) yz.push_back({g.coord(1, j), g.coord(2, k), r.eps_rec(im, j, k), r.eps_trunc(im, j, k)});
  put("eps_xy_z0.csv", write_csv_rows(xy, "x,y,eps_rec,eps_trunc"));
  put("eps_yz_xmid.csv", write_csv_rows(yz, "y,z,eps_rec,eps_trunc"));
  put("gamma_t.csv", projection_to_csv(gt));
  if (scene) put("true_footprint.csv", write_csv_rows(footprint_polygon(*scene), "target,x,y"));
  return files;
}

RunManifest run_pipeline(Stage stage, const PipelineConfig& cfg, const fs::path& out) {
  cfg.validate();
  apply_thread_env();
  fs::create_directories(out);
  RunManifest m;
  m.config_hash = config_hash(cfg);
  m.seed = cfg.seed;
  io::write_text(out / "config.yaml", dump_config(cfg));

  std::vector<Stage> order;
  if (stage == Stage::Full) order = {Stage::Simulate, Stage::Preprocess, Stage::Invert};
  else order = {stage};
  for (Stage s : order) m.stages[to_string(s)].status = "pending";

  // Parameter hashes cover the config sections each stage reads.
  const std::string dump = dump_config(cfg);
  for (Stage s : order) {
    const std::string name = to_string(s);
    StageRecord& rec = m.stages[name];
    rec.params_hash = fnv(name + dump);
    const auto t0 = std::chrono::steady_clock::now();
    try {
      switch (s) {
        case Stage::Simulate: rec.outputs = stage_simulate(cfg, out); break;
        case Stage::Preprocess: rec.outputs = stage_preprocess(cfg, out); break;
        case Stage::Invert: rec.outputs = stage_invert(cfg, out); break;
        case Stage::Full: break;
      }
      rec.status = "ok";
    } catch (const std::exception& e) {
      rec.status = "failed";
      rec.error = e.what();
      m.failed_stage = name;
      m.seconds[name] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      io::write_text(out / "manifest.json", m.to_json());
      spdlog::error("stage {} failed: {}", name, e.what());
      throw;
    }
    m.seconds[name] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    io::write_text(out / "manifest.json", m.to_json());
  }
  ojson timing(m.seconds);
  io::write_text(out / "timing.json", timing.dump(2) + "\n");
  return m;
}

}  // namespace dielinv
