#include "cli.hpp"

#include <cstdio>
#include <filesystem>
#include <sstream>

#include <CLI11.hpp>

#include "sbanm/error.hpp"
#include "sbanm/eval.hpp"
#include "sbanm/graph_io.hpp"
#include "sbanm/simulate.hpp"
#include "sbanm/vem.hpp"

namespace sbanm::cli {
namespace {

namespace fs = std::filesystem;

struct FitFlags {
  std::string input;
  std::string out;
  std::size_t blocks = 2;
  std::size_t max_iter = 200;
  double tol_elbo = 1e-8;
  double tol_tau = 1e-6;
  double damping = 0.7;
  bool svi = false;
  std::size_t svi_a = 150;
  double svi_kappa_m = 2.0;
  double svi_kappa_w = 0.7;
  int threads = 0;
  std::uint64_t seed = 0;
};

void add_fit_flags(CLI::App& app, FitFlags& f, bool with_blocks) {
  app.add_option("--input", f.input, "network file")->required();
  if (with_blocks) app.add_option("--blocks", f.blocks, "number of blocks Q")->required();
  app.add_option("--max-iter", f.max_iter, "outer iteration cap")->capture_default_str();
  app.add_option("--tol-elbo", f.tol_elbo, "relative ELBO tolerance")->capture_default_str();
  app.add_option("--tol-tau", f.tol_tau, "max-abs tau tolerance")->capture_default_str();
  app.add_option("--damping", f.damping, "tau damping in (0, 1]")->capture_default_str();
  app.add_flag("--svi", f.svi, "stochastic E-step warm-up");
  app.add_option("--svi-a", f.svi_a, "base subsample size")->capture_default_str();
  app.add_option("--svi-kappa-m", f.svi_kappa_m, "subsample growth exponent")->capture_default_str();
  app.add_option("--svi-kappa-w", f.svi_kappa_w, "averaging exponent")->capture_default_str();
  app.add_option("--threads", f.threads, "worker threads (0 = default)")->capture_default_str();
  app.add_option("--seed", f.seed, "master seed")->capture_default_str();
}

FitConfig to_config(const FitFlags& f, std::size_t Q) {
  FitConfig cfg;
  cfg.Q = Q;
  cfg.max_outer = f.max_iter;
  cfg.tol_elbo = f.tol_elbo;
  cfg.tol_tau = f.tol_tau;
  cfg.damping = f.damping;
  cfg.threads = f.threads;
  cfg.seed = f.seed;
  if (f.svi) {
    SviConfig s;
    s.a = f.svi_a;
    s.kappa_m = f.svi_kappa_m;
    s.kappa_w = f.svi_kappa_w;
    s.seed = f.seed;
    cfg.svi = s;
  }
  return cfg;
}

void echo_fit_config(std::ostream& err, const std::string& cmd, const FitFlags& f) {
  err << "# " << cmd << " input=" << f.input << " max_iter=" << f.max_iter << " tol_elbo=" << f.tol_elbo
      << " tol_tau=" << f.tol_tau << " damping=" << f.damping << " svi=" << (f.svi ? 1 : 0);
  if (f.svi) err << " svi_a=" << f.svi_a << " svi_kappa_m=" << f.svi_kappa_m << " svi_kappa_w=" << f.svi_kappa_w;
  err << " threads=" << f.threads << " seed=" << f.seed << " out=" << f.out << "\n";
}

std::function<void(const IterationReport&)> progress(std::ostream& err) {
  return [&err](const IterationReport& r) {
    err << (r.stochastic ? "svi" : "iter") << "\t" << r.iteration << "\telbo=" << format_double(r.elbo)
        << "\tmax_dtau=" << format_double(r.max_tau_change) << "\tmin_p=" << format_double(r.min_signal_prob);
    for (std::size_t q : r.degenerate_blocks) err << "\tdegenerate=" << q;
    err << "\n";
  };
}

Eigen::MatrixXd one_hot(const std::vector<std::size_t>& z, std::size_t Q) {
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(z.size()), static_cast<Eigen::Index>(Q));
  for (std::size_t i = 0; i < z.size(); ++i) t(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(z[i])) = 1.0;
  return t;
}

std::string format_trace(const std::vector<double>& trace) {
  std::string s = "iteration\telbo\n";
  for (std::size_t i = 0; i < trace.size(); ++i) s += std::to_string(i + 1) + "\t" + format_double(trace[i]) + "\n";
  return s;
}

void write_fit(const fs::path& dir, const FitResult& r, std::uint64_t seed) {
  fs::create_directories(dir);
  write_memberships(dir / "memberships.csv", r.hard_membership, r.state.tau);
  ParamsDocument doc;
  doc.params = r.params;
  doc.elbo = r.elbo;
  doc.icl = r.icl;
  doc.seed = seed;
  write_params(dir / "params.json", doc);
  write_file_atomic(dir / "trace.tsv", format_trace(r.elbo_trace));
}

void write_truth(const fs::path& dir, const ModelParams& params, const SimNetwork& sim, std::uint64_t seed) {
  fs::create_directories(dir);
  write_network(sim.net, dir / "net.tsv");
  write_memberships(dir / "truth.csv", sim.membership, one_hot(sim.membership, params.Q));
  ParamsDocument doc;
  doc.params = params;
  doc.seed = seed;
  write_params(dir / "params.json", doc);
}

std::pair<std::size_t, std::size_t> parse_block_range(const std::string& s) {
  const auto colon = s.find(':');
  try {
    std::size_t used = 0;
    if (colon == std::string::npos) {
      const auto q = std::stoul(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return {q, q};
    }
    const auto lo = std::stoul(s.substr(0, colon), &used);
    if (used != colon) throw std::invalid_argument(s);
    const std::string hi_s = s.substr(colon + 1);
    const auto hi = std::stoul(hi_s, &used);
    if (used != hi_s.size()) throw std::invalid_argument(s);
    return {lo, hi};
  } catch (const std::logic_error&) {
    throw UsageError("--blocks expects Q or QMIN:QMAX, got '" + s + "'");
  }
}

// ---------------------------------------------------------------------------

struct SimulateFlags {
  std::size_t layers = 2;
  std::size_t nodes = 500;
  std::string blocks = "3:5";
  bool experiment2 = false;
  std::size_t candidates = 1;
  double keep_frac = 0.10;
  int threads = 0;
  std::uint64_t seed = 0;
  std::string out;
  CLI::Option* layers_opt = nullptr;
  CLI::Option* nodes_opt = nullptr;
};

int cmd_simulate(const SimulateFlags& f, std::ostream& out, std::ostream& err) {
  const fs::path dir(f.out);
  if (f.experiment2) {
    if (f.layers_opt->count() && f.layers != 3) throw UsageError("--experiment2 is trivariate; --layers must be 3");
    if (f.nodes_opt->count() && f.nodes != 300) throw UsageError("--experiment2 has 300 nodes");
    if (f.candidates != 1) throw UsageError("--experiment2 draws a single network per seed");
    err << "# simulate experiment2 layers=3 nodes=300 blocks=4 seed=" << f.seed << " out=" << f.out << "\n";
    auto [params, sizes] = experiment2_spec();
    Rng rng = make_rng(f.seed, "network", 0);
    const SimNetwork sim = gen_network(params, sizes, rng);
    write_truth(dir, params, sim, f.seed);
    out << "wrote\t" << (dir / "net.tsv").string() << "\n";
    return kOk;
  }

  const auto [qmin, qmax] = parse_block_range(f.blocks);
  SimSpec spec = default_spec(f.nodes, f.layers, qmin, qmax);
  spec.bhatt_keep_frac = f.keep_frac;
  spec.seed = f.seed;
  err << "# simulate layers=" << f.layers << " nodes=" << f.nodes << " blocks=" << qmin << ":" << qmax
      << " candidates=" << f.candidates << " keep_frac=" << f.keep_frac << " threads=" << f.threads
      << " seed=" << f.seed << " out=" << f.out << "\n";

  spec.threads = f.threads;
  const std::vector<Candidate> kept = simulate_candidates(spec, f.candidates);
  if (kept.size() == 1 && f.candidates == 1) {
    write_truth(dir, kept[0].params, kept[0].data, f.seed);
    out << "wrote\t" << (dir / "net.tsv").string() << "\n";
    return kOk;
  }
  std::string table = "rank\tcandidate\tQ\tmin_bhattacharyya\tsizes\n";
  for (std::size_t r = 0; r < kept.size(); ++r) {
    const Candidate& c = kept[r];
    write_truth(dir / ("candidate_" + std::to_string(r)), c.params, c.data, f.seed);
    std::string sizes;
    for (std::size_t q = 0; q < c.sizes.size(); ++q) sizes += (q ? "," : "") + std::to_string(c.sizes[q]);
    table += std::to_string(r) + "\t" + std::to_string(c.index) + "\t" + std::to_string(c.params.Q) + "\t" +
             format_double(c.min_distance) + "\t" + sizes + "\n";
  }
  fs::create_directories(dir);
  write_file_atomic(dir / "candidates.tsv", table);
  out << table;
  return kOk;
}

int cmd_fit(const FitFlags& f, std::ostream& out, std::ostream& err) {
  echo_fit_config(err, "fit blocks=" + std::to_string(f.blocks), f);
  const MultilayerNetwork net = read_network(f.input);
  FitConfig cfg = to_config(f, f.blocks);
  cfg.on_iteration = progress(err);
  FitResult r = fit(net, cfg);
  r.icl = icl(net, r);
  write_fit(f.out, r, f.seed);
  out << "converged\t" << (r.converged ? 1 : 0) << "\n"
      << "iterations\t" << r.iterations << "\n"
      << "elbo\t" << format_double(r.elbo) << "\n"
      << "icl\t" << format_double(r.icl) << "\n"
      << "noise_block\t" << r.params.noise_block << "\n";
  return kOk;
}

int cmd_select(const FitFlags& f, std::size_t qmin, std::size_t qmax, std::ostream& out, std::ostream& err) {
  if (qmin < 1 || qmax < qmin) throw UsageError("need 1 <= qmin <= qmax");
  echo_fit_config(err, "select qmin=" + std::to_string(qmin) + " qmax=" + std::to_string(qmax), f);
  const MultilayerNetwork net = read_network(f.input);
  std::string table = "Q\ticl\telbo\tconverged\n";
  std::size_t best_q = 0;
  FitResult best;
  for (std::size_t Q = qmin; Q <= qmax; ++Q) {
    FitConfig cfg = to_config(f, Q);
    FitResult r = fit(net, cfg);
    r.icl = icl(net, r);
    err << "select\tQ=" << Q << "\ticl=" << format_double(r.icl) << "\n";
    table += std::to_string(Q) + "\t" + format_double(r.icl) + "\t" + format_double(r.elbo) + "\t" +
             (r.converged ? "1" : "0") + "\n";
    if (best_q == 0 || r.icl > best.icl) {
      best_q = Q;
      best = std::move(r);
    }
  }
  table += "best\t" + std::to_string(best_q) + "\n";
  if (!f.out.empty()) {
    write_fit(f.out, best, f.seed);
    write_file_atomic(fs::path(f.out) / "selection.tsv", table);
  }
  out << table;
  return kOk;
}

int cmd_eval(const std::string& truth_path, const std::string& pred_path, std::ostream& out, std::ostream& err) {
  err << "# eval truth=" << truth_path << " pred=" << pred_path << "\n";
  const auto truth = read_memberships(truth_path);
  const auto pred = read_memberships(pred_path);
  out << "ari\tnmi\texact_recovery\n"
      << format_double(ari(truth, pred)) << "\t" << format_double(nmi(truth, pred)) << "\t"
      << (exact_recovery(truth, pred) ? "true" : "false") << "\n";
  return kOk;
}

int cmd_build_net(const std::string& responses, const std::string& transform, const std::string& outdir,
                  std::ostream& out, std::ostream& err) {
  err << "# build-net responses=" << responses << " transform=" << transform << " out=" << outdir << "\n";
  MultilayerNetwork net = transform == "fisher-agreement" ? build_similarity_network(read_responses(responses))
                                                          : normalize_logit(read_network(responses));
  const fs::path dir(outdir);
  fs::create_directories(dir);
  write_network(net, dir / "net.tsv");
  out << "wrote\t" << (dir / "net.tsv").string() << "\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Stochastic block model with ambient noise for weighted multilayer networks", "sbanm"};
  app.require_subcommand(1);

  SimulateFlags sim;
  auto* s = app.add_subcommand("simulate", "generate synthetic networks");
  sim.layers_opt = s->add_option("--layers", sim.layers, "layers K")->capture_default_str();
  sim.nodes_opt = s->add_option("--nodes", sim.nodes, "nodes n")->capture_default_str();
  auto* blocks_opt = s->add_option("--blocks", sim.blocks, "Q or QMIN:QMAX")->capture_default_str();
  s->add_flag("--experiment2", sim.experiment2, "fixed trivariate four-block instance")->excludes(blocks_opt);
  s->add_option("--candidates", sim.candidates, "candidate networks to draw")->capture_default_str();
  s->add_option("--keep-frac", sim.keep_frac, "fraction of most separable candidates kept")->capture_default_str();
  s->add_option("--threads", sim.threads, "worker threads (0 = default)")->capture_default_str();
  s->add_option("--seed", sim.seed, "master seed")->capture_default_str();
  s->add_option("--out", sim.out, "output directory")->required();

  FitFlags fit_flags;
  auto* f = app.add_subcommand("fit", "fit the model for a fixed block count");
  add_fit_flags(*f, fit_flags, true);
  f->add_option("--out", fit_flags.out, "output directory")->required();

  FitFlags sel_flags;
  std::size_t qmin = 2;
  std::size_t qmax = 7;
  auto* sel = app.add_subcommand("select", "choose Q by ICL");
  add_fit_flags(*sel, sel_flags, false);
  sel->add_option("--qmin", qmin, "smallest Q")->capture_default_str();
  sel->add_option("--qmax", qmax, "largest Q")->capture_default_str();
  sel->add_option("--out", sel_flags.out, "optional output directory for the best fit");

  std::string truth;
  std::string pred;
  auto* ev = app.add_subcommand("eval", "compare two membership files");
  ev->add_option("--truth", truth, "true memberships")->required();
  ev->add_option("--pred", pred, "fitted memberships")->required();

  std::string responses;
  std::string transform;
  std::string bn_out;
  auto* bn = app.add_subcommand("build-net", "turn raw data into a network file");
  bn->add_option("--responses", responses, "response CSV, or a count network for logit-strength")->required();
  bn->add_option("--transform", transform, "edge transform")
      ->required()
      ->check(CLI::IsMember({"fisher-agreement", "logit-strength"}));
  bn->add_option("--out", bn_out, "output directory")->required();

  std::vector<std::string> argv_store;
  argv_store.reserve(args.size() + 1);
  argv_store.emplace_back("sbanm");
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (s->parsed()) return cmd_simulate(sim, out, err);
    if (f->parsed()) return cmd_fit(fit_flags, out, err);
    if (sel->parsed()) return cmd_select(sel_flags, qmin, qmax, out, err);
    if (ev->parsed()) return cmd_eval(truth, pred, out, err);
    if (bn->parsed()) return cmd_build_net(responses, transform, bn_out, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    switch (e.kind()) {
      case ErrorKind::kUsage: return kUsage;
      case ErrorKind::kData: return kData;
      case ErrorKind::kNumerical: return kNumerical;
    }
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}

}  // namespace sbanm::cli
