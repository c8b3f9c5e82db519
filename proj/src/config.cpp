#include "dielinv/config.hpp"

#include <yaml-cpp/yaml.h>

#include <set>

#include "dielinv/io.hpp"

namespace dielinv {

void PipelineConfig::validate() const {
  scene.validate(kOmegaLo, kOmegaHi);
  acquisition.validate();
  inversion.validate();
  if (d && !(*d > 0.0)) throw InvalidArgument("d must be positive");
  if (std::abs(acquisition.spacing - inversion.spacing) > 1e-12)
    throw InvalidArgument("acquisition and inversion spacing must agree");
  if (preprocess.baseline_samples == 0) throw InvalidArgument("baseline window must be nonempty");
  (void)preset_scene(dielectric_calibrator);
  (void)preset_scene(metallic_calibrator);
}

InversionConfig PipelineConfig::inversion_for(TargetClass c) const {
  InversionConfig out = inversion;
  if (d) out.d = *d;
  else if (out.mode == InversionMode::Test1) out.d = 29.0;
  else out.d = c == TargetClass::Metallic ? 19.0 : 9.0;
  return out;
}

namespace {

class Section {
public:
  Section(const YAML::Node& n, std::string name) : node_(n), name_(std::move(name)) {
    if (node_ && !node_.IsMap()) throw InvalidArgument("config section '" + name_ + "' must be a map");
  }
  ~Section() = default;

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!node_ || !node_[key]) return;
    try {
      out = node_[key].as<T>();
    } catch (const YAML::Exception& e) {
      throw InvalidArgument("config key '" + name_ + "." + key + "': " + e.what());
    }
  }
  void get_optional(const char* key, std::optional<double>& out) {
    double v = 0.0;
    get(key, v);
    if (node_ && node_[key]) out = v;
  }
  YAML::Node child(const char* key) {
    seen_.insert(key);
    return node_ ? node_[key] : YAML::Node();
  }
  void finish() const {
    if (!node_) return;
    for (const auto& kv : node_) {
      const auto k = kv.first.as<std::string>();
      if (!seen_.count(k)) throw InvalidArgument("unknown config key '" + (name_.empty() ? k : name_ + "." + k) + "'");
    }
  }

private:
  YAML::Node node_;
  std::string name_;
  std::set<std::string> seen_;
};

TargetScene parse_scene(const YAML::Node& n) {
  if (n.IsScalar()) return preset_scene(n.as<std::string>());
  Section s(n, "scene");
  TargetScene sc;
  std::string cls = "dielectric";
  s.get("id", sc.id);
  s.get("class", cls);
  sc.label = target_class_from_string(cls);
  const YAML::Node ts = s.child("targets");
  s.finish();
  if (!ts) return sc;
  for (const auto& tn : ts) {
    Section t(tn, "scene.targets");
    Target tg;
    std::string shape = "box";
    std::vector<double> center{0, 0, 0}, dims{0.1, 0.1, 0.1};
    t.get("shape", shape);
    t.get("center", center);
    t.get("dims", dims);
    t.get("epsilon", tg.epsilon);
    t.get_optional("fill_epsilon", tg.fill_epsilon);
    t.finish();
    if (center.size() != 3 || dims.size() != 3) throw InvalidArgument("target center and dims need three entries");
    tg.shape = shape_kind_from_string(shape);
    tg.center = {center[0], center[1], center[2]};
    tg.dims = {dims[0], dims[1], dims[2]};
    sc.targets.push_back(tg);
  }
  return sc;
}

}  // namespace

PipelineConfig parse_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw InvalidArgument(std::string("config is not valid YAML: ") + e.what());
  }
  PipelineConfig c;
  if (root.IsNull()) return c;
  Section top(root, "");
  top.get("seed", c.seed);
  if (auto sn = top.child("scene")) c.scene = parse_scene(sn);
  top.get_optional("d", c.d);
  top.get("dielectric_calibrator", c.dielectric_calibrator);
  top.get("metallic_calibrator", c.metallic_calibrator);
  top.get("emit_plots", c.emit_plots);

  Section a(top.child("acquisition"), "acquisition");
  auto& ac = c.acquisition;
  a.get("spacing", ac.spacing);
  a.get("lateral", ac.lateral);
  a.get("z_bottom", ac.z_bottom);
  a.get("z_source", ac.z_source);
  a.get("z_measure", ac.z_measure);
  a.get("detector_half_span", ac.detector_half_span);
  a.get("omega", ac.omega);
  a.get("dt", ac.dt);
  a.get("final_time", ac.final_time);
  a.get("record_every", ac.record_every);
  a.finish();

  Section k(top.child("corruption"), "corruption");
  auto& cc = c.corruption;
  k.get("noise", cc.noise);
  k.get("noise_level", cc.noise_level);
  k.get("time_shift", cc.time_shift);
  k.get("max_shift", cc.max_shift);
  k.get("offset", cc.offset);
  k.get("dc_offset", cc.dc_offset);
  k.get("gain_jitter", cc.gain_jitter);
  k.get("jitter", cc.jitter);
  k.get("instrument_gain", cc.instrument_gain);
  k.get("structure_echo", cc.structure_echo);
  k.get("echo_delay", cc.echo_delay);
  k.get("echo_amplitude", cc.echo_amplitude);
  k.finish();

  Section p(top.child("preprocess"), "preprocess");
  auto& pp = c.preprocess;
  p.get("baseline_samples", pp.baseline_samples);
  p.get("max_lag", pp.time_zero.max_lag);
  p.get("correlation_threshold", pp.time_zero.threshold);
  p.get("equalize_gain", pp.time_zero.equalize_gain);
  p.get("source_shift", pp.source_shift);
  p.get("prominence", pp.extract.prominence);
  p.get("noise_k", pp.extract.noise_k);
  p.get("anchor_ratio", pp.extract.anchor_ratio);
  p.get("n_peaks", pp.extract.n_peaks);
  p.get("onset_fraction", pp.extract.onset_fraction);
  p.get("max_gap", pp.extract.max_gap);
  p.get("exclusion_margin", pp.exclusion_margin);
  p.get("reverse_bottom", pp.reverse.b);
  p.get("reverse_output_z", pp.reverse.z_out);
  p.finish();

  Section v(top.child("inversion"), "inversion");
  auto& iv = c.inversion;
  std::string mode = to_string(iv.mode);
  v.get("mode", mode);
  iv.mode = inversion_mode_from_string(mode);
  double s_lo = iv.pseudo.s_lo, s_hi = iv.pseudo.s_hi, h = iv.pseudo.h;
  v.get("s_lo", s_lo);
  v.get("s_hi", s_hi);
  v.get("h", h);
  iv.pseudo = PseudoFreqGrid::from_step(s_lo, s_hi, h);
  v.get("lambda", iv.lambda);
  v.get("eta", iv.eta);
  iv.max_inner = iv.mode == InversionMode::Test2 ? 5 : 25;
  v.get("max_inner", iv.max_inner);
  v.get("spacing", iv.spacing);
  v.get("projection_threshold", iv.projection_threshold);
  v.get("depth_truncation", iv.depth_truncation);
  v.get("margin", iv.margin);
  v.get("no_target_level", iv.no_target_level);
  v.get("solver_tol", iv.solver_tol);
  v.finish();
  iv.omega_freq = ac.omega;
  iv.dt = ac.dt;

  top.finish();
  c.validate();
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) { return parse_config(io::read_text(path)); }

std::string dump_config(const PipelineConfig& c) {
  YAML::Emitter e;
  e.SetDoublePrecision(17);
  e << YAML::BeginMap;
  e << YAML::Key << "seed" << YAML::Value << c.seed;
  e << YAML::Key << "scene" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "id" << YAML::Value << c.scene.id;
  e << YAML::Key << "class" << YAML::Value << to_string(c.scene.label);
  e << YAML::Key << "targets" << YAML::Value << YAML::BeginSeq;
  for (const Target& t : c.scene.targets) {
    e << YAML::BeginMap;
    e << YAML::Key << "shape" << YAML::Value << to_string(t.shape);
    e << YAML::Key << "center" << YAML::Value << YAML::Flow << std::vector<double>(t.center.begin(), t.center.end());
    e << YAML::Key << "dims" << YAML::Value << YAML::Flow << std::vector<double>(t.dims.begin(), t.dims.end());
    e << YAML::Key << "epsilon" << YAML::Value << t.epsilon;
    if (t.fill_epsilon) e << YAML::Key << "fill_epsilon" << YAML::Value << *t.fill_epsilon;
    e << YAML::EndMap;
  }
  e << YAML::EndSeq << YAML::EndMap;
  if (c.d) e << YAML::Key << "d" << YAML::Value << *c.d;
  e << YAML::Key << "dielectric_calibrator" << YAML::Value << c.dielectric_calibrator;
  e << YAML::Key << "metallic_calibrator" << YAML::Value << c.metallic_calibrator;
  e << YAML::Key << "emit_plots" << YAML::Value << c.emit_plots;

  const auto& ac = c.acquisition;
  e << YAML::Key << "acquisition" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "spacing" << YAML::Value << ac.spacing;
  e << YAML::Key << "lateral" << YAML::Value << ac.lateral;
  e << YAML::Key << "z_bottom" << YAML::Value << ac.z_bottom;
  e << YAML::Key << "z_source" << YAML::Value << ac.z_source;
  e << YAML::Key << "z_measure" << YAML::Value << ac.z_measure;
  e << YAML::Key << "detector_half_span" << YAML::Value << ac.detector_half_span;
  e << YAML::Key << "omega" << YAML::Value << ac.omega;
  e << YAML::Key << "dt" << YAML::Value << ac.dt;
  e << YAML::Key << "final_time" << YAML::Value << ac.final_time;
  e << YAML::Key << "record_every" << YAML::Value << ac.record_every;
  e << YAML::EndMap;

  const auto& cc = c.corruption;
  e << YAML::Key << "corruption" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "noise" << YAML::Value << cc.noise;
  e << YAML::Key << "noise_level" << YAML::Value << cc.noise_level;
  e << YAML::Key << "time_shift" << YAML::Value << cc.time_shift;
  e << YAML::Key << "max_shift" << YAML::Value << cc.max_shift;
  e << YAML::Key << "offset" << YAML::Value << cc.offset;
  e << YAML::Key << "dc_offset" << YAML::Value << cc.dc_offset;
  e << YAML::Key << "gain_jitter" << YAML::Value << cc.gain_jitter;
  e << YAML::Key << "jitter" << YAML::Value << cc.jitter;
  e << YAML::Key << "instrument_gain" << YAML::Value << cc.instrument_gain;
  e << YAML::Key << "structure_echo" << YAML::Value << cc.structure_echo;
  e << YAML::Key << "echo_delay" << YAML::Value << cc.echo_delay;
  e << YAML::Key << "echo_amplitude" << YAML::Value << cc.echo_amplitude;
  e << YAML::EndMap;

  const auto& pp = c.preprocess;
  e << YAML::Key << "preprocess" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "baseline_samples" << YAML::Value << pp.baseline_samples;
  e << YAML::Key << "max_lag" << YAML::Value << pp.time_zero.max_lag;
  e << YAML::Key << "correlation_threshold" << YAML::Value << pp.time_zero.threshold;
  e << YAML::Key << "equalize_gain" << YAML::Value << pp.time_zero.equalize_gain;
  e << YAML::Key << "source_shift" << YAML::Value << pp.source_shift;
  e << YAML::Key << "prominence" << YAML::Value << pp.extract.prominence;
  e << YAML::Key << "noise_k" << YAML::Value << pp.extract.noise_k;
  e << YAML::Key << "anchor_ratio" << YAML::Value << pp.extract.anchor_ratio;
  e << YAML::Key << "n_peaks" << YAML::Value << pp.extract.n_peaks;
  e << YAML::Key << "onset_fraction" << YAML::Value << pp.extract.onset_fraction;
  e << YAML::Key << "max_gap" << YAML::Value << pp.extract.max_gap;
  e << YAML::Key << "exclusion_margin" << YAML::Value << pp.exclusion_margin;
  e << YAML::Key << "reverse_bottom" << YAML::Value << pp.reverse.b;
  e << YAML::Key << "reverse_output_z" << YAML::Value << pp.reverse.z_out;
  e << YAML::EndMap;

  const auto& iv = c.inversion;
  e << YAML::Key << "inversion" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "mode" << YAML::Value << to_string(iv.mode);
  e << YAML::Key << "s_lo" << YAML::Value << iv.pseudo.s_lo;
  e << YAML::Key << "s_hi" << YAML::Value << iv.pseudo.s_hi;
  e << YAML::Key << "h" << YAML::Value << iv.pseudo.h;
  e << YAML::Key << "lambda" << YAML::Value << iv.lambda;
  e << YAML::Key << "eta" << YAML::Value << iv.eta;
  e << YAML::Key << "max_inner" << YAML::Value << iv.max_inner;
  e << YAML::Key << "spacing" << YAML::Value << iv.spacing;
  e << YAML::Key << "projection_threshold" << YAML::Value << iv.projection_threshold;
  e << YAML::Key << "depth_truncation" << YAML::Value << iv.depth_truncation;
  e << YAML::Key << "margin" << YAML::Value << iv.margin;
  e << YAML::Key << "no_target_level" << YAML::Value << iv.no_target_level;
  e << YAML::Key << "solver_tol" << YAML::Value << iv.solver_tol;
  e << YAML::EndMap;
  e << YAML::EndMap;
  return std::string(e.c_str()) + "\n";
}

std::uint64_t config_hash(const PipelineConfig& c) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : dump_config(c)) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace dielinv
