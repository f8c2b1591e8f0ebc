// qsips: simulate, reconstruct, fuse, analyze, verify.
//
// Exit codes: 0 success, 1 other failure, 2 config error, 3 data-format
// error, 4 verification failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "qsips/qsips.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace qsips;

namespace {

constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitFormat = 3;
constexpr int kExitVerify = 4;

struct CommonArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  int workers = 0;
  std::string out;
};

struct Context {
  ScenarioConfig cfg;
  fs::path out;
  int workers = 0;
};

Context load(const CommonArgs& args) {
  Context ctx;
  ctx.cfg = load_config(args.config);
  if (args.seed) ctx.cfg.acquisition.seed = *args.seed;
  ctx.out = args.out.empty() ? fs::path(ctx.cfg.outputs.dir) : fs::path(args.out);
  ctx.workers = static_cast<int>(resolve_workers(args.workers));
  fs::create_directories(ctx.out);
  write_file(ctx.out / "config.canonical.json", canonical_text(ctx.cfg));
  return ctx;
}

bool wants(const std::vector<std::string>& list, const std::string& item) {
  return std::find(list.begin(), list.end(), item) != list.end();
}

// Stem for pattern index i: "uniform" or "t<theta>_p<phi>" indices.
std::string pattern_stem(const ScenarioConfig& cfg, std::size_t i) {
  if (!cfg.acquisition.structured) return "uniform";
  const std::size_t nphi = cfg.acquisition.phis.size();
  return "t" + std::to_string(i / nphi) + "_p" + std::to_string(i % nphi);
}

SimOptions sim_options(const Context& ctx) {
  SimOptions o;
  o.allocation = ctx.cfg.acquisition.allocation;
  o.workers = ctx.workers;
  return o;
}

// Display only: emitters of super-Poissonian sources show up as negative
// extrema in sign-normalized maps, so those maps are flipped before export.
FieldMap display(const FieldMap& m, const OutputsConfig& o) {
  FieldMap d = gaussian_blur(fourier_interpolate(m, o.interpolation_factor), o.blur_sigma);
  const auto [lo, hi] = std::minmax_element(d.values.begin(), d.values.end());
  if (lo != d.values.end() && -*lo > *hi) {
    for (double& v : d.values) v = -v;
  }
  return d;
}

void save_map(const Context& ctx, const fs::path& path, const FieldMap& m) {
  const auto& fmts = ctx.cfg.outputs.formats;
  if (wants(fmts, "qmap")) write_field_map(path.string() + ".qmap", m);
  if (wants(fmts, "pgm")) write_pgm16(path.string() + ".pgm", display(m, ctx.cfg.outputs));
}

Roi fit_roi(const ScenarioConfig& cfg, const FieldMap& m) {
  if (cfg.analysis.fit_half_size <= 0.0 || cfg.scene.emitters.empty()) return {};
  return Roi::around(cfg.scene.emitters.front().position, cfg.analysis.fit_half_size, m);
}

std::optional<GaussianFit> try_fit(const FieldMap& m, Roi roi) {
  try {
    return gaussian_fit_2d(m, roi);
  } catch (const FitFailure&) {
    return std::nullopt;
  }
}

// ---------------------------------------------------------------------------

int cmd_simulate(const CommonArgs& args) {
  Context ctx = load(args);
  const auto& cfg = ctx.cfg;
  const auto patterns = cfg.patterns();
  json manifest{{"command", "simulate"}, {"seed", cfg.acquisition.seed}, {"n_frames", cfg.acquisition.n_frames}};
  json stacks = json::array();
  for (std::size_t i = 0; i < patterns.size(); ++i) {
    const auto& p = patterns[i];
    const RngSpec rng{cfg.pattern_seed(i), 0};
    const FrameStack s = sample_stack(cfg.scene, p, cfg.acquisition.n_frames, rng, sim_options(ctx));
    const fs::path file = ctx.out / "stacks" / (pattern_stem(cfg, i) + ".qstk");
    write_frame_stack(file, s);
    stacks.push_back({{"file", fs::relative(file, ctx.out).string()},
                      {"stem", pattern_stem(cfg, i)},
                      {"seed", rng.seed},
                      {"uniform", p.uniform},
                      {"theta", p.theta},
                      {"phi", p.phi},
                      {"p_mag", p.p_mag}});
    std::cerr << "simulate: wrote " << file.string() << "\n";
  }
  manifest["stacks"] = stacks;
  write_file(ctx.out / "manifest.json", manifest.dump(2) + "\n");
  return 0;
}

int cmd_reconstruct(const CommonArgs& args, const std::vector<std::string>& inputs, bool force_g) {
  Context ctx = load(args);
  const auto& cfg = ctx.cfg;
  std::vector<std::pair<std::string, fs::path>> stacks;
  if (!inputs.empty()) {
    for (const auto& in : inputs) stacks.emplace_back(fs::path(in).stem().string(), fs::path(in));
  } else {
    const fs::path mpath = ctx.out / "manifest.json";
    if (!fs::exists(mpath)) throw Error("reconstruct: no stacks given and no manifest at " + mpath.string());
    const json manifest = json::parse(read_file(mpath));
    for (const auto& s : manifest.at("stacks")) {
      stacks.emplace_back(s.at("stem").get<std::string>(), ctx.out / s.at("file").get<std::string>());
    }
  }
  const auto& rec = cfg.reconstruction;
  const bool want_g = wants(rec.methods, "sr_g");
  const int j_max = rec.j_max;
  const int acc_order = want_g ? std::max(j_max, 5) : j_max;
  const auto mode = rec.unbiased ? CumulantMode::Unbiased : CumulantMode::PlugIn;

  CsvWriter metrics({"stack", "method", "order", "sigma", "sigma_stderr", "enhancement", "enhancement_stderr"});
  for (const auto& [stem, path] : stacks) {
    const FrameStack s = read_frame_stack(path);
    if (s.width != cfg.scene.width || s.height != cfg.scene.height) {
      throw FormatError("stack " + path.string() + " does not match the configured grid", 8);
    }
    const MomentAccumulator acc = accumulate_stack(s, acc_order, want_g);
    const CumulantStack k = cumulants_from_raw(acc, j_max, mode);
    const fs::path base = ctx.out / "maps" / stem;
    if (wants(cfg.outputs.formats, "qstk")) write_cumulant_stack(ctx.out / "cumulants" / (stem + ".qstk"), k);
    if (wants(cfg.outputs.formats, "csv")) write_file(ctx.out / "cumulants" / (stem + ".csv"), cumulant_csv(k));

    save_map(ctx, base.string() + "_mean", k.mean());
    const auto ref_fit = try_fit(k.mean(), fit_roi(cfg, k.mean()));
    auto record = [&](const std::string& method, int j, const FieldMap& m) {
      const auto f = try_fit(m, fit_roi(cfg, m));
      if (!f || !ref_fit) {
        metrics.row(stem, method, j, "nan", "nan", "nan", "nan");
        return;
      }
      metrics.row(stem, method, j, f->sigma(), 0.5 * f->sigma() *
                  std::sqrt(std::pow(f->stderr_of(GaussianFit::kSigmaX) / f->sigma_x, 2) +
                            std::pow(f->stderr_of(GaussianFit::kSigmaY) / f->sigma_y, 2)),
                  enhancement_ratio(*ref_fit, *f), enhancement_ratio_stderr(*ref_fit, *f));
    };
    record("mean", 1, k.mean());
    for (int j = 2; j <= j_max; ++j) {
      if (wants(rec.methods, "qsips")) {
        const auto q = sign_normalize(qsips_map(k, j));
        save_map(ctx, base.string() + "_qsips" + std::to_string(j), q.map);
        record("qsips", j, q.map);
      }
      if (wants(rec.methods, "sofi")) {
        const auto sm = sofi_map(k, j);
        save_map(ctx, base.string() + "_sofi" + std::to_string(j), sm.map);
        record("sofi", j, sm.map);
      }
    }
    if (want_g) {
      const GMaps g = g_maps(acc, std::min(5, acc_order));
      for (int j = 2; j <= std::min(5, j_max); ++j) {
        const auto sr = sr_map_via_g(k.mean(), g, j, {cfg.scene.readout_rms, force_g});
        save_map(ctx, base.string() + "_srg" + std::to_string(j), sr.map);
        record("sr_g", j, sr.map);
      }
    }
    if (cfg.analysis.visibility_peaks.size() == 2 && j_max >= 2) {
      const auto& pk = cfg.analysis.visibility_peaks;
      CsvWriter vis({"method", "order", "visibility_raw", "visibility_reported", "resolved"});
      const auto vm = visibility(k.mean(), pk[0], pk[1]);
      vis.row("mean", 1, vm.raw, vm.reported, vm.resolved ? 1 : 0);
      const auto vq = visibility(qsips_map(k, 2).map, pk[0], pk[1]);
      vis.row("qsips", 2, vq.raw, vq.reported, vq.resolved ? 1 : 0);
      const auto vs = visibility(sofi_map(k, 2).map, pk[0], pk[1]);
      vis.row("sofi", 2, vs.raw, vs.reported, vs.resolved ? 1 : 0);
      vis.save(ctx.out / "metrics" / (stem + "_visibility.csv"));
    }
    std::cerr << "reconstruct: " << stem << " (" << s.n_frames << " frames)\n";
  }
  metrics.save(ctx.out / "metrics" / "fits.csv");
  return 0;
}

int cmd_fuse(const CommonArgs& args) {
  Context ctx = load(args);
  const auto& cfg = ctx.cfg;
  if (!cfg.acquisition.structured) {
    throw DegeneratePhasesError("fuse: configuration has a single wide-field pattern; nothing to separate");
  }
  const auto& thetas = cfg.acquisition.thetas;
  const auto& phis = cfg.acquisition.phis;
  std::vector<std::string> missing;
  auto load_set = [&](const std::string& suffix) {
    AcquisitionSet set{thetas, phis, cfg.pattern_frequency(), {}};
    for (std::size_t t = 0; t < thetas.size(); ++t) {
      set.maps.emplace_back();
      for (std::size_t f = 0; f < phis.size(); ++f) {
        const fs::path p = ctx.out / "maps" / (pattern_stem(cfg, t * phis.size() + f) + suffix + ".qmap");
        if (!fs::exists(p)) {
          missing.push_back(p.string());
          set.maps.back().emplace_back(cfg.scene.width, cfg.scene.height);
          continue;
        }
        set.maps.back().push_back(read_field_map(p));
      }
    }
    return set;
  };
  const AcquisitionSet mean_set = load_set("_mean");
  const AcquisitionSet qsips_set = load_set("_qsips2");
  const AcquisitionSet sofi_set = load_set("_sofi2");
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += "\n  " + m;
    throw FormatError("fuse: missing per-pattern maps (run reconstruct with qsips and sofi, j_max >= 2):" + list, 0);
  }
  auto average = [](const AcquisitionSet& s) {
    FieldMap avg(s.maps[0][0].width, s.maps[0][0].height, s.maps[0][0].pixel_pitch);
    double n = 0;
    for (const auto& row : s.maps) {
      for (const auto& m : row) {
        for (std::size_t i = 0; i < m.size(); ++i) avg[i] += m[i];
        n += 1;
      }
    }
    for (double& v : avg.values) v /= n;
    return avg;
  };
  FusionParams fp;
  fp.w = cfg.fusion.w;
  fp.apodize = cfg.fusion.apodize;
  fp.bands = cfg.fusion.bands;
  fp.upsample = cfg.fusion.upsample;
  fp.map_order = 2;
  fp.sigma = cfg.scene.psf.sigma;
  const FieldMap intensity = average(mean_set);
  const FieldMap sofi_avg = average(sofi_set);
  const FieldMap qsips_avg = average(qsips_set);
  const FusionResult sofi_sim = fuse(sofi_set, fp);
  const FusionResult qsips_sim = fuse(qsips_set, fp);
  save_map(ctx, ctx.out / "fused" / "intensity", intensity);
  save_map(ctx, ctx.out / "fused" / "sofi2", sofi_avg);
  save_map(ctx, ctx.out / "fused" / "qsips2", qsips_avg);
  save_map(ctx, ctx.out / "fused" / "sofi2_sim", sofi_sim.fused);
  save_map(ctx, ctx.out / "fused" / "qsips2_sim", qsips_sim.fused);

  CsvWriter table({"method", "sigma", "enhancement", "enhancement_stderr"});
  const auto ref = try_fit(intensity, fit_roi(cfg, intensity));
  auto row = [&](const std::string& name, const FieldMap& m) {
    const auto f = try_fit(m, fit_roi(cfg, m));
    if (!f || !ref) {
      table.row(name, "nan", "nan", "nan");
      return;
    }
    table.row(name, f->sigma(), enhancement_ratio(*ref, *f), enhancement_ratio_stderr(*ref, *f));
    std::cout << name << ": enhancement " << enhancement_ratio(*ref, *f) << "\n";
  };
  row("intensity", intensity);
  row("SOFI2", sofi_avg);
  row("QSIPS2", qsips_avg);
  row("SOFI2-SIM", sofi_sim.fused);
  row("QSIPS2-SIM", qsips_sim.fused);
  table.save(ctx.out / "metrics" / "enhancement.csv");
  return 0;
}

// Exact-map studies: PSF narrowing per order and, when configured, the
// visibility sweep over M.
int cmd_analyze(const CommonArgs& args) {
  Context ctx = load(args);
  const auto& cfg = ctx.cfg;
  const IlluminationPattern wide = IlluminationPattern::wide_field();
  const int j_max = cfg.reconstruction.j_max;
  const CumulantStack k = exact_cumulant_stack(cfg.scene, wide, j_max);
  CsvWriter narrowing({"method", "order", "sigma", "enhancement", "sqrt_order"});
  const auto ref = try_fit(k.mean(), fit_roi(cfg, k.mean()));
  for (int j = 1; j <= j_max; ++j) {
    for (const char* method : {"qsips", "sofi"}) {
      const FieldMap m = std::string(method) == "qsips" ? sign_normalize(qsips_map(k, j)).map : sofi_map(k, j).map;
      const auto f = try_fit(m, fit_roi(cfg, m));
      if (!f || !ref) {
        narrowing.row(method, j, "nan", "nan", std::sqrt(j));
      } else {
        narrowing.row(method, j, f->sigma(), enhancement_ratio(*ref, *f), std::sqrt(j));
      }
    }
  }
  narrowing.save(ctx.out / "metrics" / "narrowing_exact.csv");

  if (!cfg.analysis.sweep_M.empty() && cfg.analysis.visibility_peaks.size() == 2) {
    const auto& pk = cfg.analysis.visibility_peaks;
    CsvWriter sweep({"M", "fano_detected", "mean_detected", "V_SOFI", "V_QSIPS"});
    for (int M : cfg.analysis.sweep_M) {
      Scene scene = cfg.scene;
      for (auto& e : scene.emitters) {
        if (auto* b = std::get_if<Blinking>(&e.model)) b->M = M;
      }
      const CumulantStack ks = exact_cumulant_stack(scene, wide, 2);
      // Averages over pixels within 2 sigma of either emitter.
      double fano = 0, mean = 0, n = 0;
      for (std::size_t iy = 0; iy < scene.height; ++iy) {
        for (std::size_t ix = 0; ix < scene.width; ++ix) {
          bool inside = false;
          for (const auto& e : scene.emitters) {
            inside |= std::hypot(ix - e.position.x, iy - e.position.y) <= 2 * scene.psf.sigma;
          }
          if (!inside || !(ks.order(1).at(ix, iy) > 0)) continue;
          fano += ks.order(2).at(ix, iy) / ks.order(1).at(ix, iy);
          mean += ks.order(1).at(ix, iy);
          n += 1;
        }
      }
      sweep.row(M, n > 0 ? fano / n : 0.0, n > 0 ? mean / n : 0.0, visibility(sofi_map(ks, 2).map, pk[0], pk[1]).raw,
                visibility(qsips_map(ks, 2).map, pk[0], pk[1]).raw);
    }
    sweep.save(ctx.out / "metrics" / "visibility_sweep_exact.csv");
  }
  std::cerr << "analyze: wrote " << (ctx.out / "metrics").string() << "\n";
  return 0;
}

int cmd_verify(const std::string& out, bool mutate) {
  const VerifyReport report = run_verification(mutate ? flipped_sign_beta_source() : default_beta_source());
  const std::string text = report.to_json().dump(2) + "\n";
  std::cout << text;
  if (!out.empty()) write_file(fs::path(out) / "verify.json", text);
  return report.all_passed() ? 0 : kExitVerify;
}

void add_common(CLI::App* sub, CommonArgs& args, bool need_config = true) {
  auto* c = sub->add_option("--config", args.config, "Scenario config (JSON)");
  if (need_config) c->required()->check(CLI::ExistingFile);
  sub->add_option("--seed", args.seed, "Override the configured RNG seed");
  sub->add_option("--workers", args.workers, "Worker threads (default: QSIPS_WORKERS or hardware)")->check(CLI::NonNegativeNumber);
  sub->add_option("--out", args.out, "Output directory (default: outputs.dir of the config)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Photon-statistics super-resolution toolkit"};
  app.require_subcommand(1);

  CommonArgs sim_args, rec_args, fuse_args, an_args;
  std::vector<std::string> rec_inputs;
  bool force_g = false;
  std::string verify_out;
  bool mutate = false;

  auto* sim = app.add_subcommand("simulate", "Sample frame stacks, one per illumination pattern");
  add_common(sim, sim_args);
  auto* rec = app.add_subcommand("reconstruct", "Cumulants and super-resolved maps from stacks");
  add_common(rec, rec_args);
  rec->add_option("stacks", rec_inputs, "QSTK files (default: the manifest in --out)");
  rec->add_flag("--force-g-maps", force_g, "Build g-function maps even when readout noise is present");
  auto* fu = app.add_subcommand("fuse", "Structured-illumination fusion of second-order maps");
  add_common(fu, fuse_args);
  auto* an = app.add_subcommand("analyze", "Exact-map narrowing and visibility studies");
  add_common(an, an_args);
  auto* ver = app.add_subcommand("verify", "Run the identity oracle suites");
  ver->add_option("--out", verify_out, "Directory for verify.json");
  ver->add_flag("--mutate-beta-sign", mutate, "Test hook: corrupt beta signs")->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitConfig;
  }

  try {
    if (sim->parsed()) return cmd_simulate(sim_args);
    if (rec->parsed()) return cmd_reconstruct(rec_args, rec_inputs, force_g);
    if (fu->parsed()) return cmd_fuse(fuse_args);
    if (an->parsed()) return cmd_analyze(an_args);
    if (ver->parsed()) return cmd_verify(verify_out, mutate);
  } catch (const ConfigError& e) {
    std::cerr << "config error at " << e.key_path() << ": " << e.what() << "\n";
    return kExitConfig;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kExitFormat;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kExitFormat;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitOther;
  }
  return kExitOther;
}
