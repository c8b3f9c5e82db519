#include "dielinv/dielinv.h"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <cstring>
#include <exception>
#include <map>
#include <string>

#include "dielinv/config.hpp"
#include "dielinv/elliptic.hpp"
#include "dielinv/io.hpp"
#include "dielinv/pipeline.hpp"

struct dielinv_config {
  dielinv::PipelineConfig cfg;
};

struct dielinv_summary {
  std::map<std::string, double> numbers;
  std::map<std::string, std::string> strings;
};

namespace {

thread_local std::string g_last_error;

template <typename F>
dielinv_status guarded(F&& f) {
  try {
    g_last_error.clear();
    f();
    return DIELINV_OK;
  } catch (const dielinv::InvalidArgument& e) {
    g_last_error = e.what();
    return DIELINV_ERR_INVALID_ARGUMENT;
  } catch (const dielinv::NumericalError& e) {
    g_last_error = e.what();
    return DIELINV_ERR_NUMERICAL;
  } catch (const dielinv::IoError& e) {
    g_last_error = e.what();
    return DIELINV_ERR_IO;
  } catch (const std::filesystem::filesystem_error& e) {
    g_last_error = e.what();
    return DIELINV_ERR_IO;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return DIELINV_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return DIELINV_ERR_INTERNAL;
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw dielinv::InvalidArgument(what);
}

}  // namespace

extern "C" {

const char* dielinv_version(void) { return "1.0.0"; }

const char* dielinv_last_error(void) { return g_last_error.c_str(); }

dielinv_status dielinv_set_log_level(const char* level) {
  return guarded([&] {
    require(level != nullptr, "null level");
    const auto lv = spdlog::level::from_str(level);
    if (lv == spdlog::level::off && std::string(level) != "off")
      throw dielinv::InvalidArgument(std::string("unknown log level '") + level + "'");
    spdlog::set_level(lv);
  });
}

dielinv_status dielinv_config_load(const char* path, dielinv_config** out) {
  return guarded([&] {
    require(out != nullptr, "null output handle");
    auto* h = new dielinv_config;
    try {
      if (path && *path) h->cfg = dielinv::load_config(path);
    } catch (...) {
      delete h;
      throw;
    }
    *out = h;
  });
}

dielinv_status dielinv_config_parse(const char* text, dielinv_config** out) {
  return guarded([&] {
    require(out != nullptr && text != nullptr, "null argument");
    *out = new dielinv_config{dielinv::parse_config(text)};
  });
}

void dielinv_config_free(dielinv_config* cfg) { delete cfg; }

dielinv_status dielinv_config_set_seed(dielinv_config* cfg, uint64_t seed) {
  return guarded([&] {
    require(cfg != nullptr, "null config");
    cfg->cfg.seed = seed;
  });
}

dielinv_status dielinv_config_set_mode(dielinv_config* cfg, const char* mode) {
  return guarded([&] {
    require(cfg != nullptr && mode != nullptr, "null argument");
    auto& iv = cfg->cfg.inversion;
    const auto m = dielinv::inversion_mode_from_string(mode);
    if (m != iv.mode) iv.max_inner = m == dielinv::InversionMode::Test2 ? 5 : 25;
    iv.mode = m;
  });
}

dielinv_status dielinv_config_hash(const dielinv_config* cfg, uint64_t* out) {
  return guarded([&] {
    require(cfg != nullptr && out != nullptr, "null argument");
    *out = dielinv::config_hash(cfg->cfg);
  });
}

dielinv_status dielinv_config_dump(const dielinv_config* cfg, char* buf, size_t size, size_t* needed) {
  return guarded([&] {
    require(cfg != nullptr, "null config");
    const std::string s = dielinv::dump_config(cfg->cfg);
    if (needed) *needed = s.size() + 1;
    if (buf && size > 0) {
      const std::size_t n = std::min(size - 1, s.size());
      std::memcpy(buf, s.data(), n);
      buf[n] = '\0';
    }
  });
}

dielinv_status dielinv_run(const dielinv_config* cfg, const char* stage, const char* out_dir) {
  return guarded([&] {
    require(cfg != nullptr && stage != nullptr && out_dir != nullptr, "null argument");
    dielinv::run_pipeline(dielinv::stage_from_string(stage), cfg->cfg, out_dir);
  });
}

dielinv_status dielinv_summary_load(const char* out_dir, dielinv_summary** out) {
  return guarded([&] {
    require(out_dir != nullptr && out != nullptr, "null argument");
    const auto path = std::filesystem::path(out_dir) / "invert" / "summary.json";
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(dielinv::io::read_text(path));
    } catch (const nlohmann::json::exception& e) {
      throw dielinv::IoError("malformed " + path.string() + ": " + e.what());
    }
    auto* s = new dielinv_summary;
    for (const char* k : {"max_eps", "n_comp", "eps_comp", "selected_layer", "gamma_t_area"})
      if (doc.contains(k)) s->numbers[k] = doc[k].get<double>();
    s->numbers["no_target"] = doc.value("no_target", false) ? 1.0 : 0.0;
    if (doc.contains("centroid")) {
      s->numbers["centroid_x"] = doc["centroid"][0].get<double>();
      s->numbers["centroid_y"] = doc["centroid"][1].get<double>();
      s->numbers["centroid_z"] = doc["centroid"][2].get<double>();
    }
    for (const char* k : {"mode", "target_class", "message"})
      if (doc.contains(k)) s->strings[k] = doc[k].get<std::string>();
    *out = s;
  });
}

void dielinv_summary_free(dielinv_summary* s) { delete s; }

dielinv_status dielinv_summary_get(const dielinv_summary* s, const char* key, double* out) {
  return guarded([&] {
    require(s != nullptr && key != nullptr && out != nullptr, "null argument");
    auto it = s->numbers.find(key);
    if (it == s->numbers.end()) throw dielinv::InvalidArgument(std::string("no numeric summary field '") + key + "'");
    *out = it->second;
  });
}

dielinv_status dielinv_summary_get_string(const dielinv_summary* s, const char* key, const char** out) {
  return guarded([&] {
    require(s != nullptr && key != nullptr && out != nullptr, "null argument");
    auto it = s->strings.find(key);
    if (it == s->strings.end()) throw dielinv::InvalidArgument(std::string("no string summary field '") + key + "'");
    *out = it->second.c_str();
  });
}

dielinv_status dielinv_carleman_coefficients(size_t n, double s_lo, double s_hi, double h, double lambda,
                                             double out[3]) {
  return guarded([&] {
    require(out != nullptr, "null output");
    const auto grid = dielinv::PseudoFreqGrid::from_step(s_lo, s_hi, h);
    const auto c = dielinv::carleman_coefficients(n, grid, lambda);
    out[0] = c.A1;
    out[1] = c.A2;
    out[2] = c.A3;
  });
}

dielinv_status dielinv_calibration_factor(const double* sim, const double* exp, size_t n, double* out) {
  return guarded([&] {
    require(sim != nullptr && exp != nullptr && out != nullptr && n > 0, "null or empty argument");
    *out = dielinv::calibration_factor(std::span<const double>(sim, n), std::span<const double>(exp, n));
  });
}

}  // extern "C"
