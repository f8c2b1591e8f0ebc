#pragma once

// Scenario configuration: JSON in, validated structs out, canonical JSON
// back. Unknown keys are rejected with their key path.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "qsips/errors.hpp"
#include "qsips/frame_sim.hpp"
#include "qsips/photon_models.hpp"
#include "qsips/rng.hpp"
#include "qsips/scene.hpp"

namespace qsips {

struct AcquisitionConfig {
  std::size_t n_frames = 1000;
  std::uint64_t seed = 0;
  Allocation allocation = Allocation::Independent;
  bool structured = false;
  std::vector<double> thetas;     // structured only
  std::vector<double> phis;       // structured only
  std::optional<double> p_mag;    // nullopt: the Abbe frequency of the PSF
  bool operator==(const AcquisitionConfig&) const = default;
};

struct ReconstructionConfig {
  int j_max = 4;
  std::vector<std::string> methods{"qsips", "sofi"};
  bool unbiased = false;
  bool operator==(const ReconstructionConfig&) const = default;
};

struct FusionConfig {
  double w = 0.05;
  bool apodize = true;
  int bands = 3;
  std::size_t upsample = 0;
  bool operator==(const FusionConfig&) const = default;
};

struct AnalysisConfig {
  double fit_half_size = 0.0;  // 0: fit the whole map
  std::vector<Point> visibility_peaks;
  std::vector<int> sweep_M;
  bool operator==(const AnalysisConfig&) const = default;
};

struct OutputsConfig {
  std::string dir = "out";
  std::vector<std::string> formats{"qmap", "csv"};
  std::size_t interpolation_factor = 1;
  double blur_sigma = 0.0;
  bool operator==(const OutputsConfig&) const = default;
};

struct ScenarioConfig {
  Scene scene;
  AcquisitionConfig acquisition;
  ReconstructionConfig reconstruction;
  FusionConfig fusion;
  AnalysisConfig analysis;
  OutputsConfig outputs;
  bool operator==(const ScenarioConfig&) const = default;

  double pattern_frequency() const { return acquisition.p_mag.value_or(abbe_frequency(scene.psf)); }

  // Patterns in theta-major order; a single wide-field pattern otherwise.
  std::vector<IlluminationPattern> patterns() const {
    if (!acquisition.structured) return {IlluminationPattern::wide_field()};
    std::vector<IlluminationPattern> out;
    for (double t : acquisition.thetas) {
      for (double f : acquisition.phis) out.push_back(IlluminationPattern::sinusoid(t, f, pattern_frequency()));
    }
    return out;
  }

  // Independent seed per pattern index.
  std::uint64_t pattern_seed(std::size_t index) const { return stream_key(acquisition.seed, index, 0x5eed); }
};

namespace detail {

using nlohmann::json;

class ConfigReader {
 public:
  ConfigReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "/" : path_, "expected an object");
  }

  ~ConfigReader() = default;

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  const json& require(const std::string& key) {
    const json* v = find(key);
    if (!v) throw ConfigError(child(key), "missing required key");
    return *v;
  }

  std::string child(const std::string& key) const { return path_ + "/" + key; }

  double number(const std::string& key, std::optional<double> fallback = std::nullopt) {
    const json* v = fallback ? find(key) : &require(key);
    if (!v) return *fallback;
    if (!v->is_number()) throw ConfigError(child(key), "expected a number");
    const double d = v->get<double>();
    if (!std::isfinite(d)) throw ConfigError(child(key), "must be finite");
    return d;
  }

  bool boolean(const std::string& key, bool fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_boolean()) throw ConfigError(child(key), "expected true or false");
    return v->get<bool>();
  }

  std::uint64_t unsigned_int(const std::string& key, std::optional<std::uint64_t> fallback = std::nullopt) {
    const json* v = fallback ? find(key) : &require(key);
    if (!v) return *fallback;
    if (!v->is_number_integer() || (v->is_number_integer() && !v->is_number_unsigned() && v->get<std::int64_t>() < 0)) {
      throw ConfigError(child(key), "expected a non-negative integer");
    }
    return v->get<std::uint64_t>();
  }

  std::string string(const std::string& key, const std::string& fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_string()) throw ConfigError(child(key), "expected a string");
    return v->get<std::string>();
  }

  // Rejects keys that were never looked up.
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(child(it.key()), "unknown key");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline std::vector<double> number_list(const json& v, const std::string& path) {
  if (!v.is_array()) throw ConfigError(path, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) throw ConfigError(path + "/" + std::to_string(i), "expected a number");
    out.push_back(v[i].get<double>());
  }
  return out;
}

inline Emitter parse_emitter(const json& j, const std::string& path) {
  ConfigReader r(j, path);
  Emitter e;
  e.position = {r.number("x"), r.number("y")};
  e.rho = r.number("rho", 1.0);
  if (!(e.rho > 0.0 && e.rho <= 1.0)) throw ConfigError(r.child("rho"), "must lie in (0, 1]");
  const std::string model = r.string("model", "blinking");
  if (model == "blinking") {
    const double b = r.number("b");
    const std::uint64_t M = r.unsigned_int("M");
    if (!(b >= 0.0 && b <= 1.0)) throw ConfigError(r.child("b"), "must lie in [0, 1]");
    if (M < 1 || M > (1u << 24)) throw ConfigError(r.child("M"), "must lie in [1, 2^24]");
    e.model = Blinking{b, static_cast<int>(M)};
  } else if (model == "single_photon") {
    e.model = SinglePhoton{};
  } else if (model == "poisson") {
    const double lambda = r.number("lambda");
    if (!(lambda > 0.0)) throw ConfigError(r.child("lambda"), "must be positive");
    e.model = Poisson{lambda};
  } else if (model == "custom") {
    const auto probs = number_list(r.require("probs"), r.child("probs"));
    try {
      e.model = Custom{PhotonDistribution(probs)};
    } catch (const ContractError& err) {
      throw ConfigError(r.child("probs"), err.what());
    }
  } else {
    throw ConfigError(r.child("model"), "unknown model '" + model + "'");
  }
  r.finish();
  return e;
}

inline json emit_emitter(const Emitter& e) {
  json j{{"x", e.position.x}, {"y", e.position.y}, {"rho", e.rho}};
  std::visit(
      [&](const auto& m) {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, Blinking>) {
          j["model"] = "blinking";
          j["b"] = m.b;
          j["M"] = m.M;
        } else if constexpr (std::is_same_v<M, SinglePhoton>) {
          j["model"] = "single_photon";
        } else if constexpr (std::is_same_v<M, Poisson>) {
          j["model"] = "poisson";
          j["lambda"] = m.lambda;
        } else {
          j["model"] = "custom";
          j["probs"] = std::vector<double>(m.dist.probs().begin(), m.dist.probs().end());
        }
      },
      e.model);
  return j;
}

inline std::vector<std::string> string_list(const json& v, const std::string& path,
                                            const std::set<std::string>& allowed) {
  if (!v.is_array()) throw ConfigError(path, "expected an array of strings");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_string()) throw ConfigError(path + "/" + std::to_string(i), "expected a string");
    const auto s = v[i].get<std::string>();
    if (!allowed.count(s)) throw ConfigError(path + "/" + std::to_string(i), "unknown value '" + s + "'");
    out.push_back(s);
  }
  return out;
}

}  // namespace detail

inline ScenarioConfig parse_config(const nlohmann::json& root) {
  using detail::ConfigReader;
  ScenarioConfig cfg;
  ConfigReader top(root, "");

  {
    ConfigReader r(top.require("scene"), "/scene");
    const auto& grid = r.require("grid");
    if (!grid.is_array() || grid.size() != 2 || !grid[0].is_number_unsigned() || !grid[1].is_number_unsigned()) {
      throw ConfigError("/scene/grid", "expected [width, height] positive integers");
    }
    cfg.scene.width = grid[0].get<std::size_t>();
    cfg.scene.height = grid[1].get<std::size_t>();
    if (cfg.scene.width < 1 || cfg.scene.height < 1 || cfg.scene.width > 4096 || cfg.scene.height > 4096) {
      throw ConfigError("/scene/grid", "dimensions must lie in [1, 4096]");
    }
    {
      ConfigReader p(r.require("psf"), "/scene/psf");
      cfg.scene.psf.sigma = p.number("sigma");
      if (!(cfg.scene.psf.sigma > 0.0)) throw ConfigError("/scene/psf/sigma", "must be positive");
      const auto* peak = p.find("peak");
      if (!peak) {
        cfg.scene.psf.peak = 1.0;
      } else if (peak->is_string() && peak->get<std::string>() == "unit_sum") {
        cfg.scene.psf.peak = PSFModel::unit_sum_peak(cfg.scene.psf.sigma);
        if (cfg.scene.psf.peak > 1.0) throw ConfigError("/scene/psf/peak", "unit_sum peak exceeds 1 for this sigma");
      } else if (peak->is_number()) {
        cfg.scene.psf.peak = peak->get<double>();
      } else {
        throw ConfigError("/scene/psf/peak", "expected a number or \"unit_sum\"");
      }
      if (!(cfg.scene.psf.peak > 0.0 && cfg.scene.psf.peak <= 1.0)) throw ConfigError("/scene/psf/peak", "must lie in (0, 1]");
      p.finish();
    }
    cfg.scene.readout_rms = r.number("readout_rms", 0.0);
    if (!(cfg.scene.readout_rms >= 0.0)) throw ConfigError("/scene/readout_rms", "must be >= 0");
    if (const auto* em = r.find("emitters")) {
      if (!em->is_array()) throw ConfigError("/scene/emitters", "expected an array");
      for (std::size_t i = 0; i < em->size(); ++i) {
        cfg.scene.emitters.push_back(detail::parse_emitter((*em)[i], "/scene/emitters/" + std::to_string(i)));
      }
    }
    r.finish();
  }

  if (const auto* a = top.find("acquisition")) {
    ConfigReader r(*a, "/acquisition");
    auto& acq = cfg.acquisition;
    acq.n_frames = r.unsigned_int("n_frames", acq.n_frames);
    if (acq.n_frames < 1) throw ConfigError("/acquisition/n_frames", "must be >= 1");
    acq.seed = r.unsigned_int("seed", acq.seed);
    const auto alloc = r.string("allocation", "independent");
    if (alloc == "independent") {
      acq.allocation = Allocation::Independent;
    } else if (alloc == "multinomial") {
      acq.allocation = Allocation::Multinomial;
    } else {
      throw ConfigError("/acquisition/allocation", "expected \"independent\" or \"multinomial\"");
    }
    if (const auto* pats = r.find("patterns")) {
      if (pats->is_string() && pats->get<std::string>() == "uniform") {
        acq.structured = false;
      } else {
        ConfigReader p(*pats, "/acquisition/patterns");
        acq.structured = true;
        auto grid = [&](const char* key, std::vector<double> fallback) {
          const auto* v = p.find(key);
          if (!v || (v->is_string() && v->get<std::string>() == "default")) return fallback;
          auto out = detail::number_list(*v, p.child(key));
          if (out.empty()) throw ConfigError(p.child(key), "must not be empty");
          return out;
        };
        acq.thetas = grid("theta", default_theta_grid());
        acq.phis = grid("phi", default_phi_grid());
        if (const auto* pm = p.find("p_mag")) {
          if (pm->is_string() && pm->get<std::string>() == "abbe") {
            acq.p_mag.reset();
          } else if (pm->is_number() && pm->get<double>() >= 0.0) {
            acq.p_mag = pm->get<double>();
          } else {
            throw ConfigError("/acquisition/patterns/p_mag", "expected a non-negative number or \"abbe\"");
          }
        }
        p.finish();
      }
    }
    r.finish();
  }

  if (const auto* rc = top.find("reconstruction")) {
    ConfigReader r(*rc, "/reconstruction");
    auto& rec = cfg.reconstruction;
    const auto j = r.unsigned_int("j_max", static_cast<std::uint64_t>(rec.j_max));
    if (j < 1 || j > 8) throw ConfigError("/reconstruction/j_max", "must lie in [1, 8]");
    rec.j_max = static_cast<int>(j);
    if (const auto* m = r.find("methods")) rec.methods = detail::string_list(*m, "/reconstruction/methods", {"qsips", "sofi", "sr_g"});
    rec.unbiased = r.boolean("unbiased", rec.unbiased);
    r.finish();
  }

  if (const auto* fu = top.find("fusion")) {
    ConfigReader r(*fu, "/fusion");
    auto& f = cfg.fusion;
    f.w = r.number("w", f.w);
    if (!(f.w > 0.0)) throw ConfigError("/fusion/w", "must be positive");
    f.apodize = r.boolean("apodize", f.apodize);
    const auto bands = r.unsigned_int("bands", static_cast<std::uint64_t>(f.bands));
    if (bands != 3 && bands != 5) throw ConfigError("/fusion/bands", "must be 3 or 5");
    f.bands = static_cast<int>(bands);
    f.upsample = r.unsigned_int("upsample", f.upsample);
    if (f.upsample > 16) throw ConfigError("/fusion/upsample", "must lie in [0, 16]");
    r.finish();
  }

  if (const auto* an = top.find("analysis")) {
    ConfigReader r(*an, "/analysis");
    auto& a = cfg.analysis;
    a.fit_half_size = r.number("fit_half_size", a.fit_half_size);
    if (!(a.fit_half_size >= 0.0)) throw ConfigError("/analysis/fit_half_size", "must be >= 0");
    if (const auto* vp = r.find("visibility_peaks")) {
      if (!vp->is_array() || vp->size() != 2) throw ConfigError("/analysis/visibility_peaks", "expected two [x, y] points");
      for (std::size_t i = 0; i < 2; ++i) {
        const auto xy = detail::number_list((*vp)[i], "/analysis/visibility_peaks/" + std::to_string(i));
        if (xy.size() != 2) throw ConfigError("/analysis/visibility_peaks/" + std::to_string(i), "expected [x, y]");
        a.visibility_peaks.push_back({xy[0], xy[1]});
      }
    }
    if (const auto* sw = r.find("sweep_M")) {
      if (!sw->is_array()) throw ConfigError("/analysis/sweep_M", "expected an array of integers");
      for (std::size_t i = 0; i < sw->size(); ++i) {
        if (!(*sw)[i].is_number_unsigned() || (*sw)[i].get<std::uint64_t>() < 1) {
          throw ConfigError("/analysis/sweep_M/" + std::to_string(i), "expected a positive integer");
        }
        a.sweep_M.push_back((*sw)[i].get<int>());
      }
    }
    r.finish();
  }

  if (const auto* out = top.find("outputs")) {
    ConfigReader r(*out, "/outputs");
    auto& o = cfg.outputs;
    o.dir = r.string("dir", o.dir);
    if (const auto* f = r.find("formats")) o.formats = detail::string_list(*f, "/outputs/formats", {"qmap", "qstk", "csv", "pgm"});
    o.interpolation_factor = r.unsigned_int("interpolation_factor", o.interpolation_factor);
    if (o.interpolation_factor < 1 || o.interpolation_factor > 16) {
      throw ConfigError("/outputs/interpolation_factor", "must lie in [1, 16]");
    }
    o.blur_sigma = r.number("blur_sigma", o.blur_sigma);
    if (!(o.blur_sigma >= 0.0)) throw ConfigError("/outputs/blur_sigma", "must be >= 0");
    r.finish();
  }

  top.finish();
  return cfg;
}

inline ScenarioConfig parse_config_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("/", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(j);
}

inline ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("/", "cannot open config " + path.string());
  std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return parse_config_text(text);
}

// Every field spelled out, defaults resolved.
inline nlohmann::json canonical_json(const ScenarioConfig& cfg) {
  using nlohmann::json;
  json emitters = json::array();
  for (const auto& e : cfg.scene.emitters) emitters.push_back(detail::emit_emitter(e));
  json scene{{"grid", {cfg.scene.width, cfg.scene.height}},
             {"psf", {{"sigma", cfg.scene.psf.sigma}, {"peak", cfg.scene.psf.peak}}},
             {"readout_rms", cfg.scene.readout_rms},
             {"emitters", emitters}};
  const auto& a = cfg.acquisition;
  json patterns = "uniform";
  if (a.structured) {
    patterns = json{{"theta", a.thetas}, {"phi", a.phis}};
    if (a.p_mag) {
      patterns["p_mag"] = *a.p_mag;
    } else {
      patterns["p_mag"] = "abbe";
    }
  }
  json acquisition{{"n_frames", a.n_frames},
                   {"seed", a.seed},
                   {"allocation", a.allocation == Allocation::Independent ? "independent" : "multinomial"},
                   {"patterns", patterns}};
  json reconstruction{{"j_max", cfg.reconstruction.j_max},
                      {"methods", cfg.reconstruction.methods},
                      {"unbiased", cfg.reconstruction.unbiased}};
  json fusion{{"w", cfg.fusion.w}, {"apodize", cfg.fusion.apodize}, {"bands", cfg.fusion.bands}, {"upsample", cfg.fusion.upsample}};
  json peaks = json::array();
  for (const auto& p : cfg.analysis.visibility_peaks) peaks.push_back({p.x, p.y});
  json analysis{{"fit_half_size", cfg.analysis.fit_half_size}, {"sweep_M", cfg.analysis.sweep_M}};
  if (!peaks.empty()) analysis["visibility_peaks"] = peaks;
  json outputs{{"dir", cfg.outputs.dir},
               {"formats", cfg.outputs.formats},
               {"interpolation_factor", cfg.outputs.interpolation_factor},
               {"blur_sigma", cfg.outputs.blur_sigma}};
  return json{{"scene", scene},
              {"acquisition", acquisition},
              {"reconstruction", reconstruction},
              {"fusion", fusion},
              {"analysis", analysis},
              {"outputs", outputs}};
}

inline std::string canonical_text(const ScenarioConfig& cfg) { return canonical_json(cfg).dump(2) + "\n"; }

}  // namespace qsips
