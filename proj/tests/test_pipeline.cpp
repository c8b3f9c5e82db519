#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "dielinv/config.hpp"
#include "dielinv/pipeline.hpp"
#include "dielinv/preprocess.hpp"
#include "dielinv/scene.hpp"
#include "dielinv/synth.hpp"

using namespace dielinv;

namespace {

// Clean cube holding only the direct signal on every detector.
TraceCube direct_cube(const AcquisitionConfig& ac, std::size_t nt) {
  const double dt = ac.dt * static_cast<double>(ac.record_every);
  const auto tmpl = direct_template(ac, nt, dt);
  TraceCube c(ac.z_measure, PlaneGrid{-0.1, -0.1, 0.02, 0.02, 6, 5}, dt, nt);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 5; ++j)
      for (std::size_t t = 0; t < nt; ++t) c.at(i, j, t) = tmpl[t];
  return c;
}

CorruptionConfig nothing() {
  CorruptionConfig cc;
  cc.noise = cc.time_shift = cc.offset = cc.gain_jitter = cc.structure_echo = false;
  cc.instrument_gain = 1.0;
  return cc;
}

}  // namespace

TEST_CASE("configuration dump round trips and hashes stably") {
  PipelineConfig c;
  c.seed = 42;
  c.inversion.mode = InversionMode::Test2;
  c.scene = preset_scene("doll");
  c.d = 9.0;
  const std::string text = dump_config(c);
  const PipelineConfig back = parse_config(text);
  CHECK(dump_config(back) == text);
  CHECK(config_hash(back) == config_hash(c));
  PipelineConfig other = c;
  other.seed = 43;
  CHECK(config_hash(other) != config_hash(c));
}

TEST_CASE("configuration parsing keeps defaults and rejects unknown keys") {
  const PipelineConfig c = parse_config("seed: 7\ninversion:\n  mode: test2\n");
  CHECK(c.seed == 7);
  CHECK(c.inversion.mode == InversionMode::Test2);
  CHECK(c.inversion.lambda == 20.0);
  CHECK(c.inversion.pseudo.N == 40);
  CHECK(c.acquisition.spacing == 0.02);
  CHECK_THROWS_AS(parse_config("sede: 7\n"), InvalidArgument);
  CHECK_THROWS_AS(parse_config("inversion:\n  mode: test3\n"), InvalidArgument);
  CHECK_THROWS_AS(parse_config("inversion:\n  lambda: -1\n"), InvalidArgument);
}

TEST_CASE("contrast bound and inner cap follow the target class") {
  PipelineConfig c;
  c.inversion.mode = InversionMode::Test2;
  CHECK(c.inversion_for(TargetClass::Dielectric).d == 9.0);
  CHECK(c.inversion_for(TargetClass::Metallic).d == 19.0);
  CHECK(parse_config("inversion:\n  mode: test2\n").inversion_for(TargetClass::Dielectric).max_inner == 5);
  CHECK(parse_config("inversion:\n  mode: test1\n").inversion_for(TargetClass::Dielectric).max_inner == 25);
  c.inversion.mode = InversionMode::Test1;
  CHECK(c.inversion_for(TargetClass::Dielectric).d == 29.0);
}

TEST_CASE("scene presets and JSON round trip") {
  for (const auto& name : preset_names()) {
    const TargetScene s = preset_scene(name);
    const TargetScene b = scene_from_json(scene_to_json(s));
    CHECK(scene_to_json(b) == scene_to_json(s));
  }
  const TargetScene wood = preset_scene("wood_calibrator");
  CHECK(std::sqrt(wood.targets[0].epsilon) == doctest::Approx(2.069).epsilon(1e-3));
  CHECK(preset_scene("metal_calibrator").targets[0].epsilon == 12.0);
  CHECK_THROWS_AS(preset_scene("unicorn"), InvalidArgument);
}

TEST_CASE("scene validation") {
  TargetScene s = preset_scene("metal_cube");
  s.targets[0].epsilon = 8.0;
  CHECK_THROWS_AS(s.validate(kOmegaLo, kOmegaHi), InvalidArgument);
  TargetScene out = preset_scene("dielectric_cube");
  out.targets[0].center = {0.48, 0.0, -0.04};
  CHECK_THROWS_AS(out.validate(kOmegaLo, kOmegaHi), InvalidArgument);
}

TEST_CASE("rasterised scenes") {
  const Grid3 g = standard_domains(0.02).omega;
  const ScalarField3 empty = generate_scene(preset_scene("empty"), g);
  CHECK(empty.max() == 1.0);
  const ScalarField3 cube = generate_scene(preset_scene("dielectric_cube"), g);
  CHECK(cube.max() == 4.0);
  std::size_t inside = 0;
  for (double v : cube.values()) inside += v == 4.0;
  CHECK(inside == 5u * 5u * 5u);  // nodes within +-0.05 on a 0.02 lattice
  CHECK(cube(g.node_index(0, 0.0), g.node_index(1, 0.0), g.node_index(2, -0.04)) == 4.0);
  CHECK(cube(g.node_index(0, 0.1), g.node_index(1, 0.0), g.node_index(2, -0.04)) == 1.0);

  const ScalarField3 doll = generate_scene(preset_scene("doll"), g);
  CHECK(doll(g.node_index(0, 0.0), g.node_index(1, 0.0), g.node_index(2, -0.06)) == 4.0);  // sand below the center
  CHECK(doll(g.node_index(0, 0.0), g.node_index(1, 0.0), g.node_index(2, -0.02)) == 1.0);  // air above it
}

TEST_CASE("injected offset is removed exactly by the pre-trigger baseline") {
  AcquisitionConfig ac;
  const TraceCube clean = direct_cube(ac, 400);
  CorruptionConfig cc = nothing();
  cc.offset = true;
  const RawMeasurement raw = corrupt(clean, cc, ac, 1.0, 5);
  CHECK(raw.injected_offset == 0.37);
  const TraceCube fixed = offset_correct(raw.cube, std::make_pair<std::size_t, std::size_t>(0, 40));
  double err = 0.0;
  for (std::size_t n = 0; n < clean.data().size(); ++n) err = std::max(err, std::abs(fixed.data()[n] - clean.data()[n]));
  CHECK(err < 1e-12);
}

TEST_CASE("injected time shifts are undone to within one sample") {
  AcquisitionConfig ac;
  const std::size_t nt = 400;
  const TraceCube clean = direct_cube(ac, nt);
  CorruptionConfig cc = nothing();
  cc.time_shift = true;
  cc.gain_jitter = true;
  const RawMeasurement raw = corrupt(clean, cc, ac, 1.0, 11);
  const auto tmpl = direct_template(ac, nt, clean.dt());
  TimeZeroOptions opt;
  opt.window_hi = 200;
  const TimeZeroResult r = time_zero_correct(raw.cube, tmpl, opt);
  bool any_shift = false;
  for (std::size_t d = 0; d < raw.injected_shift.size(); ++d) {
    any_shift = any_shift || raw.injected_shift[d] != 0;
    CHECK(std::abs(r.shift[d] + raw.injected_shift[d]) <= 1);
  }
  CHECK(any_shift);
}

TEST_CASE("corruption streams are independent of each other") {
  AcquisitionConfig ac;
  const TraceCube clean = direct_cube(ac, 200);
  CorruptionConfig a = nothing();
  a.time_shift = true;
  CorruptionConfig b = a;
  b.noise = true;
  const RawMeasurement ra = corrupt(clean, a, ac, 1.0, 3);
  const RawMeasurement rb = corrupt(clean, b, ac, 1.0, 3);
  CHECK(ra.injected_shift == rb.injected_shift);
  const RawMeasurement rc = corrupt(clean, b, ac, 1.0, 3);
  for (std::size_t n = 0; n < rb.cube.data().size(); ++n) CHECK(rb.cube.data()[n] == rc.cube.data()[n]);
}

TEST_CASE("stage names") {
  CHECK(stage_from_string("full") == Stage::Full);
  CHECK(std::string(to_string(Stage::Preprocess)) == "preprocess");
  CHECK_THROWS_AS(stage_from_string("everything"), InvalidArgument);
}

TEST_CASE("a stage without its inputs fails and is recorded") {
  const auto dir = std::filesystem::temp_directory_path() / "dielinv_pipeline_missing";
  std::filesystem::remove_all(dir);
  CHECK_THROWS(run_pipeline(Stage::Invert, PipelineConfig{}, dir));
  CHECK(std::filesystem::exists(dir / "manifest.json"));
  std::filesystem::remove_all(dir);
}
