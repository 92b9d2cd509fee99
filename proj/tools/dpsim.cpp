// Command-line front end: build sketches to files, answer query batches from
// them, and evaluate builds against the exact oracle.
//
// Exit codes: 0 success, 1 I/O error, 2 parameter/precondition error.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dpsim/classify.hpp"
#include "dpsim/core.hpp"
#include "dpsim/csv.hpp"
#include "dpsim/highdim.hpp"
#include "dpsim/kde.hpp"
#include "dpsim/l2sq.hpp"
#include "dpsim/oracle.hpp"
#include "dpsim/parallel.hpp"
#include "dpsim/projections.hpp"
#include "dpsim/sketch_io.hpp"
#include "dpsim/smooth.hpp"

namespace {

using nlohmann::json;
using namespace dpsim;

struct BuildOptions {
  std::string fn;
  std::string input;
  std::string out;
  bool header = false;
  double epsilon = 1.0;
  double delta = 0.0;
  double alpha = 0.1;
  double p = 1.0;
  double radius = 1.0;
  std::string project = "none";
  std::size_t project_dim = 0;  // 0: derive from alpha
  double clip = 0.0;            // classifier; 0: default to radius
  std::uint64_t seed = 42;
  bool no_noise = false;
};

double now_ms() {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

ProjectionKind projection_kind_from_flag(const std::string& flag) {
  return flag == "dense" ? ProjectionKind::kGaussianJL : ProjectionKind::kFastJL;
}

struct BuildResult {
  Sketch sketch;
  std::size_t clip_count = 0;
  std::size_t internal_dim = 0;
};

BuildResult build_sketch(const BuildOptions& opt, const Matrix& data) {
  BuildResult res;
  const auto fn = fn_from_name(opt.fn);
  if (!fn) throw std::invalid_argument("unknown --fn " + opt.fn);
  res.sketch.fn = *fn;
  const bool project = opt.project != "none";
  const ProjectionKind pk = projection_kind_from_flag(opt.project);
  const PrivacyBudget budget{opt.epsilon, opt.delta};
  const std::size_t d = data.cols;
  res.internal_dim = d;

  switch (*fn) {
    case FnId::kL1:
    case FnId::kLpP: {
      const double p = *fn == FnId::kL1 ? 1.0 : opt.p;
      const DomainPromise box{PromiseKind::kBox, opt.radius, d};
      L1File f;
      f.structure = build_l1(data, budget, opt.alpha, box, p, opt.seed, opt.no_noise);
      res.clip_count = f.structure.clip_count;
      res.sketch.value = std::move(f);
      break;
    }
    case FnId::kL2: {
      const DomainPromise ball{PromiseKind::kL2Ball, opt.radius, d};
      EmbeddedDataset embed = embed_l2_dataset(data, opt.alpha, ball, opt.seed);
      L1File f;
      f.structure =
          build_l1(embed.points, budget, opt.alpha, embed.box, 1.0, opt.seed, opt.no_noise);
      f.embed = L2EmbedMeta{embed.spec, embed.clip, opt.radius};
      res.clip_count = embed.clip_count;
      res.internal_dim = embed.spec.out_dim;
      res.sketch.value = std::move(f);
      break;
    }
    case FnId::kL2Sq: {
      const DomainPromise box{PromiseKind::kBox, opt.radius, d};
      NoisyMoments m = build_l2sq(data, opt.epsilon, box, opt.seed, opt.no_noise);
      res.clip_count = m.clip_count;
      res.sketch.value = std::move(m);
      break;
    }
    case FnId::kGaussKde:
    case FnId::kExpKde:
    case FnId::kLaplaceKde: {
      const KernelId kernel = *fn == FnId::kGaussKde ? KernelId::kGauss
                              : *fn == FnId::kExpKde ? KernelId::kExp
                                                     : KernelId::kLaplace;
      if (kernel == KernelId::kLaplace && project) {
        std::cerr << "warning: no dimensionality reduction exists for the l1 kernel; "
                     "building unprojected\n";
      }
      DpKdeSketch sk = build_kde(data, kernel, opt.epsilon, opt.alpha, project, opt.seed,
                                 opt.no_noise, pk, opt.project_dim);
      res.internal_dim = sk.fspec.input_dim;
      res.sketch.value = std::move(sk);
      break;
    }
    case FnId::kInv1pL2:
    case FnId::kInv1pL2sq:
    case FnId::kInv1pL1: {
      const KernelId kernel = *fn == FnId::kInv1pL2      ? KernelId::kInv1pL2
                              : *fn == FnId::kInv1pL2sq ? KernelId::kInv1pL2sq
                                                         : KernelId::kInv1pL1;
      if (kernel == KernelId::kInv1pL1 && project) {
        std::cerr << "warning: no dimensionality reduction exists for the l1 kernel; "
                     "building unprojected\n";
      }
      SmoothKdeSketch sk =
          build_smooth_kde(data, kernel, opt.epsilon, opt.alpha, opt.seed, opt.no_noise,
                           project, pk);
      res.internal_dim = sk.subs.empty() ? d : sk.subs.front().fspec.input_dim;
      res.sketch.value = std::move(sk);
      break;
    }
    case FnId::kClassifier: {
      auto [features, labels] = split_labels(data);
      const double clip = opt.clip > 0.0 ? opt.clip : opt.radius;
      DpClassifier c = fit_classifier(features, labels, budget, clip, opt.project_dim,
                                      opt.seed, opt.no_noise);
      res.internal_dim = opt.project_dim > 0 ? opt.project_dim : features.cols;
      res.sketch.value = std::move(c);
      break;
    }
  }
  return res;
}

int cmd_build(const BuildOptions& opt) {
  if (opt.no_noise) {
    std::cerr << "warning: --no-noise builds are NON-PRIVATE and for testing only\n";
  }
  const Matrix data = read_csv(opt.input, opt.header);
  const double t0 = now_ms();
  BuildResult res = build_sketch(opt, data);
  const double build_ms = now_ms() - t0;
  save_sketch(res.sketch, opt.out);

  std::ifstream f(opt.out, std::ios::binary | std::ios::ate);
  const auto bytes = static_cast<std::size_t>(f.tellg());

  json report;
  report["fn"] = opt.fn;
  report["n"] = data.rows;
  report["d"] = data.cols;
  report["internal_dim"] = res.internal_dim;
  report["build_ms"] = build_ms;
  report["clip_count"] = res.clip_count;
  report["noise_off"] = opt.no_noise;
  report["out"] = opt.out;
  report["bytes"] = bytes;
  std::cout << report.dump() << "\n";
  return 0;
}

int cmd_query(const std::string& sketch_path, const std::string& queries_path, bool header,
              const std::string& format, const std::string& out_path) {
  const Sketch sketch = load_sketch(sketch_path);
  const Matrix queries = read_csv(queries_path, header);
  const std::size_t want = sketch_query_dim(sketch);
  const bool classifier = std::holds_alternative<DpClassifier>(sketch.value);
  if (queries.rows > 0 && queries.cols != want &&
      !(classifier && queries.cols == want + 1)) {
    throw std::invalid_argument("query dimension " + std::to_string(queries.cols) +
                                " does not match sketch dimension " + std::to_string(want));
  }
  std::vector<double> estimates(queries.rows);
  for (std::size_t i = 0; i < queries.rows; ++i) {
    estimates[i] = sketch_estimate(sketch, queries.row_span(i).subspan(0, want));
  }

  std::ostream* os = &std::cout;
  std::ofstream file;
  if (!out_path.empty()) {
    file.open(out_path);
    if (!file) throw std::runtime_error("cannot open " + out_path);
    os = &file;
  }
  if (format == "json") {
    json arr = json::array();
    for (double e : estimates) arr.push_back(classifier ? json(static_cast<int>(e)) : json(e));
    *os << arr.dump() << "\n";
  } else {
    char buf[64];
    for (double e : estimates) {
      if (classifier) {
        *os << static_cast<int>(e) << "\n";
      } else {
        std::snprintf(buf, sizeof(buf), "%.17g", e);
        *os << buf << "\n";
      }
    }
  }
  return 0;
}

struct EvalOptions {
  BuildOptions build;
  std::string queries;
  std::vector<double> epsilons;
  std::size_t trials = 20;
  std::string format = "csv";
  std::string out;
};

struct TrialResult {
  double mean_abs = 0.0;
  double mean_rel = 0.0;
  double fitted_m = 1.0;
  double fitted_a = 0.0;
  double accuracy = 0.0;
  double build_ms = 0.0;
  double query_ms = 0.0;
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n == 0 ? 0.0 : (n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]));
}

int cmd_eval(const EvalOptions& opt) {
  const auto fn = fn_from_name(opt.build.fn);
  if (!fn) throw std::invalid_argument("unknown --fn " + opt.build.fn);
  if (opt.epsilons.empty()) throw std::invalid_argument("--epsilons must not be empty");
  if (opt.trials == 0) throw std::invalid_argument("--trials must be positive");
  const Matrix data = read_csv(opt.build.input, opt.build.header);
  const Matrix queries = read_csv(opt.queries, opt.build.header);
  const bool classifier = *fn == FnId::kClassifier;

  // Oracle truths, computed once.
  std::vector<double> truths(queries.rows, 0.0);
  std::vector<int> truth_labels(queries.rows, 0);
  Matrix oracle_data = data;
  std::optional<KernelId> kernel;
  std::optional<DistanceFn> dist;
  switch (*fn) {
    case FnId::kL1: dist = DistanceFn::kL1; break;
    case FnId::kL2: dist = DistanceFn::kL2; break;
    case FnId::kL2Sq: dist = DistanceFn::kL2Sq; break;
    case FnId::kLpP: dist = DistanceFn::kLpP; break;
    case FnId::kGaussKde: kernel = KernelId::kGauss; break;
    case FnId::kExpKde: kernel = KernelId::kExp; break;
    case FnId::kLaplaceKde: kernel = KernelId::kLaplace; break;
    case FnId::kInv1pL2: kernel = KernelId::kInv1pL2; break;
    case FnId::kInv1pL2sq: kernel = KernelId::kInv1pL2sq; break;
    case FnId::kInv1pL1: kernel = KernelId::kInv1pL1; break;
    case FnId::kClassifier: break;
  }
  std::size_t query_dim = queries.cols;
  if (classifier) {
    if (queries.cols != data.cols)
      throw std::invalid_argument("classifier eval expects labeled queries (same columns)");
    query_dim = queries.cols - 1;
    for (std::size_t i = 0; i < queries.rows; ++i)
      truth_labels[i] = static_cast<int>(std::llround(queries.at(i, queries.cols - 1)));
  } else {
    parallel_for(queries.rows, [&](std::size_t i) {
      const auto y = queries.row_span(i);
      truths[i] = kernel ? exact_kde(oracle_data, y, *kernel)
                         : exact_distance_sum(oracle_data, y, *dist, opt.build.p);
    });
  }

  // Trial seeds are independent of epsilon (common random numbers across the
  // sweep); every (epsilon, trial) cell is deterministic.
  const std::size_t cells = opt.epsilons.size() * opt.trials;
  std::vector<TrialResult> results(cells);
  parallel_for(cells, [&](std::size_t cell) {
    const std::size_t ei = cell / opt.trials;
    const std::size_t trial = cell % opt.trials;
    BuildOptions b = opt.build;
    b.epsilon = opt.epsilons[ei];
    b.seed = opt.build.seed + 1000003ULL * trial;
    TrialResult r;
    const double t0 = now_ms();
    BuildResult built = build_sketch(b, data);
    r.build_ms = now_ms() - t0;
    const double t1 = now_ms();
    std::vector<double> est(queries.rows);
    for (std::size_t i = 0; i < queries.rows; ++i) {
      est[i] = sketch_estimate(built.sketch, queries.row_span(i).subspan(0, query_dim));
    }
    r.query_ms = now_ms() - t1;
    if (classifier) {
      std::size_t hits = 0;
      for (std::size_t i = 0; i < queries.rows; ++i)
        hits += static_cast<int>(est[i]) == truth_labels[i];
      r.accuracy = queries.rows ? static_cast<double>(hits) / queries.rows : 0.0;
    } else if (queries.rows > 0) {
      const ErrorReport rep = error_report(est, truths);
      r.mean_abs = rep.mean_abs_error;
      r.mean_rel = rep.mean_rel_error;
      r.fitted_m = rep.fitted_m;
      r.fitted_a = rep.fitted_a;
    }
    results[cell] = r;
  }, 1);

  json rows = json::array();
  for (std::size_t ei = 0; ei < opt.epsilons.size(); ++ei) {
    TrialResult agg;
    std::vector<double> build_times, query_times;
    for (std::size_t t = 0; t < opt.trials; ++t) {
      const TrialResult& r = results[ei * opt.trials + t];
      agg.mean_abs += r.mean_abs;
      agg.mean_rel += r.mean_rel;
      agg.fitted_m += r.fitted_m;
      agg.fitted_a += r.fitted_a;
      agg.accuracy += r.accuracy;
      build_times.push_back(r.build_ms);
      query_times.push_back(r.query_ms);
    }
    const double k = static_cast<double>(opt.trials);
    json row;
    row["fn"] = opt.build.fn;
    row["epsilon"] = opt.epsilons[ei];
    row["trials"] = opt.trials;
    if (classifier) {
      row["accuracy"] = agg.accuracy / k;
    } else {
      row["mean_abs_error"] = agg.mean_abs / k;
      row["mean_rel_error"] = agg.mean_rel / k;
      row["fitted_m"] = agg.fitted_m / k;
      row["fitted_a"] = agg.fitted_a / k;
    }
    row["build_ms_median"] = median(build_times);
    row["query_ms_median"] = median(query_times);
    rows.push_back(row);
  }
  if (!classifier && queries.rows > 0) {
    // Constant-0 baseline: always estimates 0, so the relative error is 1 for
    // every query with positive truth.
    KahanSum truth_sum;
    for (double t : truths) truth_sum.add(t);
    for (double eps : opt.epsilons) {
      json row;
      row["fn"] = "zero-baseline";
      row["epsilon"] = eps;
      row["trials"] = opt.trials;
      row["mean_abs_error"] = truth_sum.value() / static_cast<double>(queries.rows);
      row["mean_rel_error"] = 1.0;
      row["fitted_m"] = 2.0;
      row["fitted_a"] = 0.0;
      row["build_ms_median"] = 0.0;
      row["query_ms_median"] = 0.0;
      rows.push_back(row);
    }
  }

  std::ostream* os = &std::cout;
  std::ofstream file;
  if (!opt.out.empty()) {
    file.open(opt.out);
    if (!file) throw std::runtime_error("cannot open " + opt.out);
    os = &file;
  }
  if (opt.format == "json") {
    *os << rows.dump(2) << "\n";
  } else {
    const bool acc = classifier;
    *os << (acc ? "fn,epsilon,trials,accuracy,build_ms_median,query_ms_median\n"
                : "fn,epsilon,trials,mean_abs_error,mean_rel_error,fitted_m,fitted_a,"
                  "build_ms_median,query_ms_median\n");
    char buf[512];
    for (const auto& row : rows) {
      if (acc) {
        std::snprintf(buf, sizeof(buf), "%s,%g,%zu,%.6g,%.6g,%.6g",
                      row["fn"].get<std::string>().c_str(), row["epsilon"].get<double>(),
                      row["trials"].get<std::size_t>(), row["accuracy"].get<double>(),
                      row["build_ms_median"].get<double>(),
                      row["query_ms_median"].get<double>());
      } else {
        std::snprintf(buf, sizeof(buf), "%s,%g,%zu,%.10g,%.10g,%.6g,%.6g,%.6g,%.6g",
                      row["fn"].get<std::string>().c_str(), row["epsilon"].get<double>(),
                      row["trials"].get<std::size_t>(), row["mean_abs_error"].get<double>(),
                      row["mean_rel_error"].get<double>(), row["fitted_m"].get<double>(),
                      row["fitted_a"].get<double>(), row["build_ms_median"].get<double>(),
                      row["query_ms_median"].get<double>());
      }
      *os << buf << "\n";
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dpsim: differentially private distance and KDE sketches"};
  app.require_subcommand(1);

  BuildOptions bopt;
  CLI::App* build = app.add_subcommand("build", "build a sketch file from a CSV dataset");
  build->add_option("--fn", bopt.fn,
                    "l1|l2|l2sq|lpp|gauss-kde|exp-kde|laplace-kde|inv1p-l2|inv1p-l2sq|"
                    "inv1p-l1|classifier")->required();
  build->add_option("--input", bopt.input, "input CSV, one point per row")->required();
  build->add_option("--out", bopt.out, "output sketch file")->required();
  build->add_flag("--header", bopt.header, "skip the first CSV line");
  build->add_option("--epsilon", bopt.epsilon, "privacy epsilon");
  build->add_option("--delta", bopt.delta, "privacy delta (0 = pure DP)");
  build->add_option("--alpha", bopt.alpha, "multiplicative accuracy in (0,1)");
  build->add_option("--p", bopt.p, "exponent for lpp");
  build->add_option("--radius", bopt.radius, "domain promise radius R");
  build->add_option("--project", bopt.project, "none|dense|fast")
      ->check(CLI::IsMember({"none", "dense", "fast"}));
  build->add_option("--project-dim", bopt.project_dim, "override projection dimension");
  build->add_option("--clip", bopt.clip, "classifier clipping threshold (default: radius)");
  build->add_option("--seed", bopt.seed, "RNG seed");
  build->add_flag("--no-noise", bopt.no_noise, "disable privacy noise (NON-PRIVATE)");

  std::string q_sketch, q_queries, q_format = "csv", q_out;
  bool q_header = false;
  CLI::App* query = app.add_subcommand("query", "answer a batch of queries from a sketch");
  query->add_option("--sketch", q_sketch, "sketch file")->required();
  query->add_option("--queries", q_queries, "queries CSV, one point per row")->required();
  query->add_flag("--header", q_header, "skip the first CSV line");
  query->add_option("--format", q_format, "csv|json")->check(CLI::IsMember({"csv", "json"}));
  query->add_option("--out", q_out, "write estimates here instead of stdout");

  EvalOptions eopt;
  std::string eps_list = "1";
  CLI::App* eval = app.add_subcommand("eval", "sweep epsilon, compare against the exact oracle");
  eval->add_option("--fn", eopt.build.fn, "function id (see build)")->required();
  eval->add_option("--input", eopt.build.input, "input CSV")->required();
  eval->add_option("--queries", eopt.queries, "queries CSV")->required();
  eval->add_option("--epsilons", eps_list, "comma-separated epsilon list");
  eval->add_option("--trials", eopt.trials, "trials per epsilon");
  eval->add_flag("--header", eopt.build.header, "skip the first CSV line");
  eval->add_option("--alpha", eopt.build.alpha, "multiplicative accuracy");
  eval->add_option("--delta", eopt.build.delta, "privacy delta");
  eval->add_option("--p", eopt.build.p, "exponent for lpp");
  eval->add_option("--radius", eopt.build.radius, "domain promise radius");
  eval->add_option("--project", eopt.build.project, "none|dense|fast")
      ->check(CLI::IsMember({"none", "dense", "fast"}));
  eval->add_option("--project-dim", eopt.build.project_dim, "override projection dimension");
  eval->add_option("--clip", eopt.build.clip, "classifier clipping threshold");
  eval->add_option("--seed", eopt.build.seed, "base RNG seed");
  eval->add_flag("--no-noise", eopt.build.no_noise, "disable privacy noise (NON-PRIVATE)");
  eval->add_option("--format", eopt.format, "csv|json")->check(CLI::IsMember({"csv", "json"}));
  eval->add_option("--out", eopt.out, "write the table here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (build->parsed()) return cmd_build(bopt);
    if (query->parsed()) return cmd_query(q_sketch, q_queries, q_header, q_format, q_out);
    if (eval->parsed()) {
      eopt.epsilons.clear();
      std::stringstream ss(eps_list);
      std::string tok;
      while (std::getline(ss, tok, ',')) {
        if (!tok.empty()) eopt.epsilons.push_back(std::stod(tok));
      }
      if (eopt.build.no_noise) {
        std::cerr << "warning: --no-noise builds are NON-PRIVATE and for testing only\n";
      }
      return cmd_eval(eopt);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
