#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <future>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "tgv/bilevel_dual.hpp"
#include "tgv/bilevel_primal_dual.hpp"
#include "tgv/io.hpp"
#include "tgv/lower_dual.hpp"
#include "tgv/lower_primal_dual.hpp"
#include "tgv/metrics.hpp"
#include "tgv/upper_objective.hpp"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitIo = 2;
constexpr int kExitNoConvergence = 3;

struct CommonOpts {
  std::string config_path;
  std::string input_path;
  std::string truth_path;
  std::string output_dir = ".";
  std::string phantom;  // generate input instead of reading it
  int size = 64;
  double sigma2 = -1.0;
  long long seed = -1;
  int n_w = 7;
};

void addCommon(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "config file (key = value with [sections])");
  cmd->add_option("--input", o.input_path, "input image (binary PGM)");
  cmd->add_option("--truth", o.truth_path, "ground-truth image (binary PGM)");
  cmd->add_option("--output", o.output_dir, "output directory");
  cmd->add_option("--phantom", o.phantom,
                  "generate the input: affine-ramp | piecewise-constant | "
                  "piecewise-affine | oscillatory");
  cmd->add_option("--size", o.size, "phantom side length");
  cmd->add_option("--sigma2", o.sigma2, "noise variance");
  cmd->add_option("--seed", o.seed, "noise seed (default: TGV_SEED env or 0)");
  cmd->add_option("--n-w", o.n_w, "residual filter side length");
}

std::uint64_t resolveSeed(long long flag_seed) {
  if (flag_seed >= 0) return std::uint64_t(flag_seed);
  if (const char* env = std::getenv("TGV_SEED")) return std::strtoull(env, nullptr, 10);
  return 0;
}

tgv::Config loadConfig(const CommonOpts& o) {
  if (o.config_path.empty()) return tgv::Config();
  return tgv::Config::fromFile(o.config_path);
}

// Inputs: either a PGM file or a generated phantom; noise is added to
// generated phantoms when sigma2 > 0.
struct LoadedInput {
  tgv::ScalarField f;
  std::optional<tgv::ScalarField> truth;
};

LoadedInput loadInput(const CommonOpts& o, tgv::GridMode mode) {
  LoadedInput in{tgv::ScalarField(), std::nullopt};
  if (!o.input_path.empty()) {
    tgv::ScalarField img = tgv::read_pgm(o.input_path);
    const tgv::GridSpec g(img.grid.n, img.grid.m, mode);
    in.f = tgv::ScalarField(g, img.values);
  } else if (!o.phantom.empty()) {
    const tgv::GridSpec g(o.size, o.size, mode);
    tgv::ScalarField truth = tgv::make_phantom(tgv::phantom_kind_from_string(o.phantom), g);
    in.truth = truth;
    in.f = o.sigma2 > 0.0
               ? tgv::add_gaussian_noise(truth, o.sigma2, resolveSeed(o.seed))
               : truth;
  } else {
    throw CLI::ValidationError("either --input or --phantom is required");
  }
  if (!o.truth_path.empty()) {
    tgv::ScalarField t = tgv::read_pgm(o.truth_path);
    if (t.grid.n != in.f.grid.n || t.grid.m != in.f.grid.m)
      throw tgv::IoError("truth image size does not match the input");
    in.truth = tgv::ScalarField(in.f.grid, t.values);
  }
  return in;
}

void reportMetrics(const tgv::ScalarField& u, const tgv::ScalarField& truth,
                   const std::string& label) {
  std::cout << label << ": psnr=" << tgv::psnr(u, truth)
            << " ssim=" << tgv::ssim(u, truth) << "\n";
}

std::filesystem::path outPath(const CommonOpts& o, const std::string& name) {
  std::filesystem::create_directories(o.output_dir);
  return std::filesystem::path(o.output_dir) / name;
}

tgv::DualSolverConfig dualConfig(const tgv::Config& cfg) {
  tgv::DualSolverConfig c;
  c.beta = cfg.getDouble("dual.beta", c.beta);
  c.gamma = cfg.getDouble("dual.gamma", c.gamma);
  c.delta = cfg.getDouble("dual.delta", c.delta);
  c.eps0_init = cfg.getDouble("dual.eps0_init", c.eps0_init);
  c.eps1_init = cfg.getDouble("dual.eps1_init", c.eps1_init);
  c.eps0_final = cfg.getDouble("dual.eps0_final", c.eps0_final);
  c.eps1_final = cfg.getDouble("dual.eps1_final", c.eps1_final);
  c.theta_eps = cfg.getDouble("dual.theta_eps", c.theta_eps);
  c.newton_tol = cfg.getDouble("dual.newton_tol", c.newton_tol);
  c.max_newton = cfg.getInt("dual.max_newton", c.max_newton);
  return c;
}

tgv::PDSolverConfig pdConfig(const tgv::Config& cfg) {
  tgv::PDSolverConfig c;
  c.mu = cfg.getDouble("pd.mu", c.mu);
  c.alpha_reg = cfg.getDouble("pd.alpha_reg", c.alpha_reg);
  c.gamma0 = cfg.getDouble("pd.gamma0", c.gamma0);
  c.gamma1 = cfg.getDouble("pd.gamma1", c.gamma1);
  c.delta = cfg.getDouble("pd.delta", c.delta);
  c.kkt_tol = cfg.getDouble("pd.kkt_tol", c.kkt_tol);
  c.max_newton = cfg.getInt("pd.max_newton", c.max_newton);
  return c;
}

void writeBilevelOutputs(const CommonOpts& o, const tgv::ScalarField& u,
                         const tgv::ScalarField& alpha1, const tgv::Vector& alpha0,
                         const tgv::RunHistory& history) {
  tgv::write_pgm(outPath(o, "denoised.pgm").string(), u, 16);
  history.writeCsv(outPath(o, "history.csv").string());
  tgv::write_field_csv(outPath(o, "alpha1.csv").string(), alpha1);
  {
    // weight maps rescaled to [0,1] for viewing
    const double lo = alpha1.values.minCoeff(), hi = alpha1.values.maxCoeff();
    tgv::ScalarField vis(alpha1.grid,
                         hi > lo ? tgv::Vector((alpha1.values.array() - lo) / (hi - lo))
                                 : tgv::Vector(tgv::Vector::Zero(alpha1.grid.size())));
    tgv::write_pgm(outPath(o, "alpha1.pgm").string(), vis, 16);
  }
  if (alpha0.size() == alpha1.grid.size()) {
    const tgv::ScalarField a0(alpha1.grid, alpha0);
    tgv::write_field_csv(outPath(o, "alpha0.csv").string(), a0);
    const double lo = alpha0.minCoeff(), hi = alpha0.maxCoeff();
    tgv::ScalarField vis(alpha1.grid,
                         hi > lo ? tgv::Vector((alpha0.array() - lo) / (hi - lo))
                                 : tgv::Vector(tgv::Vector::Zero(alpha1.grid.size())));
    tgv::write_pgm(outPath(o, "alpha0.pgm").string(), vis, 16);
  }
}

struct GridSearchRow {
  double alpha0 = 0.0, alpha1 = 0.0;
  double psnr_db = 0.0, ssim_val = 0.0, f_val = 0.0;
  bool ok = false;
};

std::vector<double> logGrid(double lo, double hi, int count) {
  std::vector<double> out;
  if (count == 1) return {lo};
  for (int i = 0; i < count; ++i)
    out.push_back(lo * std::pow(hi / lo, double(i) / double(count - 1)));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"weighted second-order TGV denoising and bilevel weight learning"};
  app.require_subcommand(1);

  CommonOpts common;

  auto* cmd_metrics = app.add_subcommand("metrics", "PSNR/SSIM between two images");
  addCommon(cmd_metrics, common);

  auto* cmd_dd = app.add_subcommand("denoise-dual", "predual Newton solver, scalar weights");
  addCommon(cmd_dd, common);
  double flag_alpha0 = -1.0, flag_alpha1 = -1.0;
  cmd_dd->add_option("--alpha0", flag_alpha0, "tensor-box weight");
  cmd_dd->add_option("--alpha1", flag_alpha1, "vector-box weight");

  auto* cmd_dp = app.add_subcommand("denoise-pd", "primal-dual KKT solver, scalar weights");
  addCommon(cmd_dp, common);
  cmd_dp->add_option("--alpha0", flag_alpha0, "tensor weight");
  cmd_dp->add_option("--alpha1", flag_alpha1, "vector weight");

  auto* cmd_bd = app.add_subcommand("bilevel-dual", "learn (alpha0, alpha1) via the dual pipeline");
  addCommon(cmd_bd, common);
  int flag_max_outer = -1;
  cmd_bd->add_option("--max-outer", flag_max_outer, "outer iteration count");

  auto* cmd_bp = app.add_subcommand("bilevel-pd", "learn weights via the primal-dual pipeline");
  addCommon(cmd_bp, common);
  std::string flag_alpha0_mode = "scalar";
  cmd_bp->add_option("--max-outer", flag_max_outer, "outer iteration count");
  cmd_bp->add_option("--alpha0-mode", flag_alpha0_mode, "scalar | spatial");

  auto* cmd_gs = app.add_subcommand("gridsearch", "scalar weight sweep with quality metrics");
  addCommon(cmd_gs, common);
  std::string gs_solver = "pd";
  double gs_a0_lo = 0.01, gs_a0_hi = 10.0, gs_a1_lo = 0.01, gs_a1_hi = 10.0;
  int gs_count = 6;
  cmd_gs->add_option("--solver", gs_solver, "dual | pd");
  cmd_gs->add_option("--alpha0-min", gs_a0_lo);
  cmd_gs->add_option("--alpha0-max", gs_a0_hi);
  cmd_gs->add_option("--alpha1-min", gs_a1_lo);
  cmd_gs->add_option("--alpha1-max", gs_a1_hi);
  cmd_gs->add_option("--count", gs_count, "grid points per axis");

  CLI11_PARSE(app, argc, argv);

  try {
    const tgv::Config cfg = loadConfig(common);

    if (cmd_metrics->parsed()) {
      if (common.input_path.empty() || common.truth_path.empty())
        throw CLI::ValidationError("metrics needs --input and --truth");
      const tgv::ScalarField a = tgv::read_pgm(common.input_path);
      const tgv::ScalarField b = tgv::read_pgm(common.truth_path);
      reportMetrics(a, b, "metrics");
      return 0;
    }

    if (cmd_dd->parsed() || cmd_dp->parsed()) {
      const bool is_dual = cmd_dd->parsed();
      const auto in = loadInput(common, is_dual ? tgv::GridMode::Dual
                                                : tgv::GridMode::PrimalDual);
      tgv::ScalarField u(in.f.grid);
      if (is_dual) {
        const double a0 = flag_alpha0 > 0 ? flag_alpha0 : cfg.getDouble("dual.alpha0", 3.125e-6);
        const double a1 = flag_alpha1 > 0 ? flag_alpha1 : cfg.getDouble("dual.alpha1", 9e-4);
        const auto res = tgv::solve_lower_dual(in.f, a0, tgv::ScalarField(in.f.grid, a1),
                                               dualConfig(cfg));
        if (!res.converged) {
          std::cerr << "dual solver did not converge (last residual "
                    << res.residual_history.back() << ")\n";
          return kExitNoConvergence;
        }
        u = tgv::recover_image(res.p, in.f);
      } else {
        const double a0 = flag_alpha0 > 0 ? flag_alpha0 : cfg.getDouble("pd.alpha0", 0.2);
        const double a1 = flag_alpha1 > 0 ? flag_alpha1 : cfg.getDouble("pd.alpha1", 0.25);
        const auto res = tgv::pd_newton_solve(in.f, a0, tgv::ScalarField(in.f.grid, a1),
                                              pdConfig(cfg));
        if (!res.converged) {
          std::cerr << "primal-dual solver did not converge (last residual "
                    << res.residual_history.back() << ")\n";
          return kExitNoConvergence;
        }
        u = res.x.u;
      }
      tgv::write_pgm(outPath(common, "denoised.pgm").string(), u, 16);
      if (in.truth) reportMetrics(u, *in.truth, "denoised");
      return 0;
    }

    if (cmd_bd->parsed()) {
      const auto in = loadInput(common, tgv::GridMode::Dual);
      const double sigma2 = common.sigma2 > 0 ? common.sigma2
                                              : cfg.getDouble("bilevel.sigma2", -1.0);
      if (sigma2 <= 0) throw CLI::ValidationError("bilevel-dual needs --sigma2");
      tgv::BilevelDualConfig bcfg;
      bcfg.lower = dualConfig(cfg);
      bcfg.corridor = tgv::CorridorSpec(sigma2, common.n_w);
      bcfg.lambda = cfg.getDouble("bilevel.lambda", bcfg.lambda);
      bcfg.max_outer = flag_max_outer > 0 ? flag_max_outer
                                          : cfg.getInt("bilevel.max_outer", bcfg.max_outer);
      bcfg.alpha0_init = cfg.getDouble("bilevel.alpha0_init", bcfg.alpha0_init);
      bcfg.alpha1_init = cfg.getDouble("bilevel.alpha1_init", bcfg.alpha1_init);
      const auto res = tgv::run_bilevel_dual(in.f, bcfg,
                                             in.truth ? &*in.truth : nullptr);
      const tgv::ScalarField u = tgv::recover_image(res.p, in.f);
      writeBilevelOutputs(common, u, res.alpha1, tgv::Vector::Constant(1, res.alpha0),
                          res.history);
      std::cout << "bilevel-dual: objective=" << res.objective
                << " alpha0=" << res.alpha0
                << " lower_solves=" << res.total_lower_solves << "\n";
      if (in.truth) reportMetrics(u, *in.truth, "denoised");
      return 0;
    }

    if (cmd_bp->parsed()) {
      const auto in = loadInput(common, tgv::GridMode::PrimalDual);
      const double sigma2 = common.sigma2 > 0 ? common.sigma2
                                              : cfg.getDouble("bilevel.sigma2", -1.0);
      if (sigma2 <= 0) throw CLI::ValidationError("bilevel-pd needs --sigma2");
      tgv::BilevelPDConfig bcfg;
      bcfg.lower = pdConfig(cfg);
      bcfg.corridor = tgv::CorridorSpec(sigma2, common.n_w);
      bcfg.lambda1 = cfg.getDouble("bilevel.lambda1", bcfg.lambda1);
      bcfg.max_outer = flag_max_outer > 0 ? flag_max_outer
                                          : cfg.getInt("bilevel.max_outer", bcfg.max_outer);
      bcfg.alpha0_init = cfg.getDouble("bilevel.alpha0_init", bcfg.alpha0_init);
      bcfg.alpha1_init = cfg.getDouble("bilevel.alpha1_init", bcfg.alpha1_init);
      if (flag_alpha0_mode == "spatial") {
        bcfg.alpha0_mode = tgv::Alpha0Mode::Spatial;
        bcfg.lambda0 = cfg.getDouble("bilevel.lambda0", 1e-11);
      } else if (flag_alpha0_mode != "scalar") {
        throw CLI::ValidationError("--alpha0-mode must be scalar or spatial");
      }
      const auto res = tgv::run_bilevel_pd(in.f, bcfg, in.truth ? &*in.truth : nullptr);
      writeBilevelOutputs(common, res.x.u, res.alpha1, res.alpha0, res.history);
      std::cout << "bilevel-pd: objective=" << res.objective
                << " lower_solves=" << res.total_lower_solves << "\n";
      if (in.truth) reportMetrics(res.x.u, *in.truth, "denoised");
      return 0;
    }

    if (cmd_gs->parsed()) {
      const bool is_dual = gs_solver == "dual";
      if (!is_dual && gs_solver != "pd")
        throw CLI::ValidationError("--solver must be dual or pd");
      const auto in = loadInput(common, is_dual ? tgv::GridMode::Dual
                                                : tgv::GridMode::PrimalDual);
      if (!in.truth) throw CLI::ValidationError("gridsearch needs a ground truth");
      const double sigma2 = common.sigma2 > 0 ? common.sigma2 : 0.01;
      const tgv::CorridorSpec corridor(sigma2, common.n_w);
      const auto a0s = logGrid(gs_a0_lo, gs_a0_hi, gs_count);
      const auto a1s = logGrid(gs_a1_lo, gs_a1_hi, gs_count);

      std::vector<GridSearchRow> rows(a0s.size() * a1s.size());
      const auto solveOne = [&](size_t idx) {
        GridSearchRow row;
        row.alpha0 = a0s[idx / a1s.size()];
        row.alpha1 = a1s[idx % a1s.size()];
        try {
          tgv::ScalarField u(in.f.grid);
          if (is_dual) {
            const auto res = tgv::solve_lower_dual(
                in.f, row.alpha0, tgv::ScalarField(in.f.grid, row.alpha1), dualConfig(cfg));
            if (!res.converged) return row;
            u = tgv::recover_image(res.p, in.f);
          } else {
            const auto res = tgv::pd_newton_solve(
                in.f, row.alpha0, tgv::ScalarField(in.f.grid, row.alpha1), pdConfig(cfg));
            if (!res.converged) return row;
            u = res.x.u;
          }
          row.psnr_db = tgv::psnr(u, *in.truth);
          row.ssim_val = tgv::ssim(u, *in.truth);
          row.f_val = tgv::objective_F(tgv::localized_residual(u, in.f, corridor), corridor);
          row.ok = true;
        } catch (const std::exception&) {
          row.ok = false;
        }
        return row;
      };

      const size_t workers = std::max(1u, std::thread::hardware_concurrency());
      for (size_t base = 0; base < rows.size(); base += workers) {
        std::vector<std::future<GridSearchRow>> batch;
        for (size_t i = base; i < std::min(rows.size(), base + workers); ++i)
          batch.push_back(std::async(std::launch::async, solveOne, i));
        for (size_t i = 0; i < batch.size(); ++i) rows[base + i] = batch[i].get();
      }

      std::vector<std::vector<double>> table;
      size_t best_psnr = 0, best_f = 0;
      for (size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        table.push_back({r.alpha0, r.alpha1, r.psnr_db, r.ssim_val, r.f_val,
                         r.ok ? 1.0 : 0.0});
        if (r.ok && (!rows[best_psnr].ok || r.psnr_db > rows[best_psnr].psnr_db))
          best_psnr = i;
        if (r.ok && (!rows[best_f].ok || r.f_val < rows[best_f].f_val)) best_f = i;
      }
      tgv::write_csv(outPath(common, "gridsearch.csv").string(),
                     {"alpha0", "alpha1", "psnr", "ssim", "f_value", "ok"}, table);
      std::cout << "best psnr: alpha0=" << rows[best_psnr].alpha0
                << " alpha1=" << rows[best_psnr].alpha1
                << " psnr=" << rows[best_psnr].psnr_db << "\n";
      std::cout << "best f: alpha0=" << rows[best_f].alpha0
                << " alpha1=" << rows[best_f].alpha1
                << " f=" << rows[best_f].f_val << "\n";
      return 0;
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const tgv::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return kExitNoConvergence;
  }
  return 0;
}
