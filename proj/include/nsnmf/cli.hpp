// Command-line front end: detect-offline, detect-online, baseline and
// benchmark subcommands sharing one config mechanism.
//
// Settings resolve as flags > --config file > built-in defaults. The config
// file is TOML with one section per subcommand, e.g.
//
//   [detect-offline]
//   input = "wbc.csv"
//   k = 5
//
// Every run that writes files also writes the fully resolved settings next
// to its output; passing that file back through --config reruns it.

#pragma once

#include "nsnmf/baselines.hpp"
#include "nsnmf/common.hpp"
#include "nsnmf/csv.hpp"
#include "nsnmf/evaluation.hpp"
#include "nsnmf/graph.hpp"
#include "nsnmf/model.hpp"
#include "nsnmf/offline.hpp"
#include "nsnmf/online.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace nsnmf::cli {

enum ExitCode : int { kSuccess = 0, kInvalidInput = 1, kRuntimeFailure = 2 };

// Flags shared by every subcommand that reads one observation file.
struct InputFlags {
  std::string input;
  std::string id_col;
  std::string label_col;
  bool normalize = false;
  std::string output;
  std::string config_out;
};

struct Input {
  DataMatrix data;
  std::vector<bool> labels; // empty without --label-col
};

inline Input load_input(const InputFlags& f) {
  const auto table = csv::read_table(f.input);
  Input in;
  std::vector<std::size_t> skip;
  std::vector<std::string> ids;
  std::optional<std::size_t> label;
  if (!f.label_col.empty()) {
    label = csv::column_index(table, f.label_col);
    skip.push_back(*label);
  }
  if (!f.id_col.empty()) {
    const auto c = csv::column_index(table, f.id_col);
    skip.push_back(c);
    ids = csv::column_strings(table, c);
  }
  Matrix values = csv::numeric_columns(table, skip);
  if (f.normalize) evaluation::min_max_normalize(values);
  in.data = DataMatrix(std::move(values), std::move(ids));
  if (label)
    for (std::size_t r = 0; r < table.rows.size(); ++r)
      in.labels.push_back(evaluation::parse_label(table.rows[r][*label], table.line_numbers[r]));
  return in;
}

// "-" => stdout; empty => <input stem>.<suffix>.csv in the working directory.
inline std::string resolve_output(const InputFlags& f, const std::string& suffix) {
  if (!f.output.empty()) return f.output;
  return std::filesystem::path(f.input).stem().string() + "." + suffix + ".csv";
}

inline std::string sidecar_path(const InputFlags& f, const std::string& output) {
  if (!f.config_out.empty()) return f.config_out;
  if (output == "-") return {};
  return output + ".config.toml";
}

class OutputFile {
 public:
  OutputFile(const std::string& path, std::ostream& fallback) {
    if (path == "-") {
      os_ = &fallback;
      return;
    }
    file_.open(path);
    if (!file_) throw std::runtime_error("cannot write output file: " + path);
    os_ = &file_;
  }
  std::ostream& stream() { return *os_; }

 private:
  std::ofstream file_;
  std::ostream* os_ = nullptr;
};

inline void write_sidecar(const CLI::App& app, const std::string& path) {
  if (path.empty()) return;
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write config sidecar: " + path);
  f << "# resolved settings; rerun with: nsnmf --config " << path << '\n';
  for (const auto* sub : app.get_subcommands())
    f << '[' << sub->get_name() << "]\n" << sub->config_to_str(true, false);
}

inline void report_detection(std::ostream& err, const AnomalyReport& report,
                             const std::vector<bool>& labels) {
  if (labels.empty()) return;
  const Index tp = evaluation::true_positives(report, labels);
  err << "true positives in top " << report.flagged_count() << ": " << tp << '\n';
}

inline void add_input_flags(CLI::App* sub, InputFlags& f) {
  sub->add_option("--input", f.input, "Observation CSV, one row per observation")
      ->required()
      ->check(CLI::ExistingFile);
  sub->add_option("--id-col", f.id_col, "Id column (header name or 0-based index)");
  sub->add_option("--label-col", f.label_col,
                  "Label column excluded from the attributes; enables a true-positive count");
  sub->add_flag("--normalize,!--no-normalize", f.normalize, "Min-max scale each column to [0, 1]")
      ->capture_default_str();
  sub->add_option("--output", f.output,
                  "Score CSV; '-' for stdout (default: <input stem>.<command>.csv)");
  sub->add_option("--config-out", f.config_out,
                  "Resolved-settings file (default: <output>.config.toml)");
}

inline void add_hyper_flags(CLI::App* sub, HyperParams& h) {
  sub->add_option("--k", h.k, "Latent factors K")->capture_default_str();
  sub->add_option("--alpha", h.alpha, "Reconstruction weight alpha, in (0, 1]")->capture_default_str();
  sub->add_option("--gamma", h.gamma, "Frobenius regularisation gamma")->capture_default_str();
}

inline void add_sgd_flags(CLI::App* sub, offline::SgdSchedule& s) {
  sub->add_option("--max-rounds", s.max_rounds, "Round cap")->capture_default_str();
  sub->add_option("--tol", s.tolerance, "Relative objective change that ends the fit")
      ->capture_default_str();
  sub->add_option("--eps0", s.epsilon0, "Initial step size")->capture_default_str();
  sub->add_option("--tau", s.tau, "Step decay: eps0 / (1 + t / tau)")->capture_default_str();
}

inline void add_similarity_flags(CLI::App* sub, graph::SimilarityOptions& s) {
  sub->add_option_function<std::string>(
         "--duplicate-cap",
         [&s](const std::string& v) {
           s.cap = v == "epsilon" ? graph::DuplicateCap::reciprocal_epsilon
                                  : graph::DuplicateCap::nearest_positive;
         },
         "Similarity of zero-length tree edges: 'nearest' uses the closest positive edge, "
         "'epsilon' uses 1/epsilon")
      ->check(CLI::IsMember({"nearest", "epsilon"}))
      ->default_str(s.cap == graph::DuplicateCap::reciprocal_epsilon ? "epsilon" : "nearest");
  sub->add_option("--epsilon", s.epsilon, "Distance floor for --duplicate-cap epsilon")
      ->capture_default_str();
}

// ---------------------------------------------------------------------------
// detect-offline
// ---------------------------------------------------------------------------

struct OfflineCommand {
  InputFlags io;
  HyperParams h;
  offline::SgdSchedule schedule;
  graph::SimilarityOptions similarity;
  std::string mst_dump;

  void attach(CLI::App* sub) {
    add_input_flags(sub, io);
    add_hyper_flags(sub, h);
    sub->add_option("--blocks", h.blocks, "Block splits B per dimension")->capture_default_str();
    sub->add_option("--top-n", h.top_n, "Number of rows to flag")->capture_default_str();
    sub->add_option("--seed", schedule.seed, "Random seed")->capture_default_str();
    add_sgd_flags(sub, schedule);
    sub->add_option("--threads", schedule.threads,
                    "Workers per round; 0 = NSNMF_THREADS or machine parallelism")
        ->capture_default_str();
    add_similarity_flags(sub, similarity);
    sub->add_option("--mst-dump", mst_dump, "Write the MST edge list ('u v weight') here");
  }

  void run(const CLI::App& root, std::ostream& out, std::ostream& err) {
    const Input in = load_input(io);
    if (!mst_dump.empty()) {
      std::ofstream f(mst_dump);
      if (!f) throw std::runtime_error("cannot write MST dump: " + mst_dump);
      graph::write_edge_list(f, graph::mst_from_points(in.data.values));
    }
    const auto det = offline::detect_offline(in.data, h, schedule, similarity);
    const auto path = resolve_output(io, "offline");
    OutputFile f(path, out);
    write_report_csv(f.stream(), det.report, in.data.row_ids);
    err << "rounds " << det.fit.rounds << (det.fit.converged ? " (converged)" : " (round cap)")
        << ", objective " << det.fit.objective_trace.back() << '\n';
    report_detection(err, det.report, in.labels);
    write_sidecar(root, sidecar_path(io, path));
  }
};

// ---------------------------------------------------------------------------
// detect-online
// ---------------------------------------------------------------------------

struct OnlineCommand {
  InputFlags io;
  bool from_stdin = false;
  online::OnlineOptions opt;
  std::string mode = "batch";
  int top_n = 10;
  double quantile = 0.99;
  std::size_t window = 1000;
  std::size_t warmup = 30;

  void attach(CLI::App* sub) {
    auto* input = sub->add_option("--input", io.input, "Observation CSV in arrival order")
                      ->check(CLI::ExistingFile);
    auto* stdin_flag =
        sub->add_flag("--stdin", from_stdin, "Read one CSV row per line from standard input");
    input->excludes(stdin_flag);
    sub->add_option("--id-col", io.id_col, "Id column (header name or 0-based index)");
    sub->add_option("--label-col", io.label_col,
                    "Label column excluded from the attributes (--input only)");
    sub->add_flag("--normalize,!--no-normalize", io.normalize,
                  "Min-max scale each column (--input only)")
        ->capture_default_str();
    sub->add_option("--output", io.output,
                    "Score CSV; '-' for stdout (default: <input stem>.online.csv, stdout with --stdin)");
    sub->add_option("--config-out", io.config_out, "Resolved-settings file");
    sub->add_option("--buffer", opt.buffer, "Buffer size z")->capture_default_str();
    sub->add_option("--k", opt.k, "Latent factors K")->capture_default_str();
    sub->add_option("--alpha", opt.alpha, "Reconstruction weight alpha")->capture_default_str();
    sub->add_option("--gamma", opt.gamma, "Regularisation of the bootstrap fit")->capture_default_str();
    sub->add_option("--seed", opt.seed, "Random seed")->capture_default_str();
    sub->add_option("--inner-tol", opt.inner_tolerance, "Relative change of w_d that ends the inner loop")
        ->capture_default_str();
    sub->add_option("--inner-max", opt.inner_max_iterations, "Inner iteration cap")
        ->capture_default_str();
    sub->add_option("--mode", mode, "batch: top-N at stream end; live: running-quantile threshold")
        ->check(CLI::IsMember({"batch", "live"}))
        ->capture_default_str();
    sub->add_option("--top-n", top_n, "Rows to flag in batch mode")->capture_default_str();
    sub->add_option("--quantile", quantile, "Live threshold quantile")->capture_default_str();
    sub->add_option("--window", window, "Live threshold window (scores)")->capture_default_str();
    sub->add_option("--warmup", warmup, "Scores seen before live flagging starts")
        ->capture_default_str();
  }

  void run(const CLI::App& root, std::istream& in, std::ostream& out, std::ostream& err) {
    if (io.input.empty() && !from_stdin) throw InvalidInput("detect-online needs --input or --stdin");
    if (from_stdin && (io.normalize || !io.label_col.empty()))
      throw InvalidInput("--normalize and --label-col need --input");
    const std::string path = !io.output.empty() ? io.output : from_stdin ? "-" : resolve_output(io, "online");
    OutputFile f(path, out);
    std::ostream& os = f.stream();
    os << std::setprecision(17);

    if (mode == "live") {
      online::LiveThreshold threshold(quantile, window, warmup);
      os << "row_id,score,flagged\n";
      std::vector<std::string> ids;
      auto emit = [&](const std::vector<online::ScoredRow>& scored) {
        for (const auto& s : scored) {
          const bool flag = threshold.observe(s.score);
          const auto k = static_cast<std::size_t>(s.index);
          os << (k < ids.size() && !ids[k].empty() ? ids[k] : std::to_string(s.index)) << ','
             << s.score << ',' << (flag ? 1 : 0) << '\n';
        }
        os.flush();
      };
      stream_rows(in, ids, emit);
    } else {
      std::vector<std::string> ids;
      std::vector<double> scores;
      auto collect = [&](const std::vector<online::ScoredRow>& scored) {
        for (const auto& s : scored) {
          const auto k = static_cast<std::size_t>(s.index);
          if (scores.size() <= k) scores.resize(k + 1, 0.0);
          scores[k] = s.score;
        }
      };
      const std::vector<bool> labels = stream_rows(in, ids, collect);
      if (scores.empty()) throw InvalidInput("stream ended before the buffer filled");
      const Vector v = Eigen::Map<const Vector>(scores.data(), static_cast<Index>(scores.size()));
      const auto report = flag_top_n(v, top_n);
      ids.resize(scores.size());
      const bool have_ids = std::any_of(ids.begin(), ids.end(), [](const auto& s) { return !s.empty(); });
      write_report_csv(os, report, have_ids ? ids : std::vector<std::string>{});
      std::vector<bool> scored_labels(labels.begin(), labels.begin() + std::min(labels.size(), scores.size()));
      if (scored_labels.size() == scores.size()) report_detection(err, report, scored_labels);
    }
    write_sidecar(root, sidecar_path(io, path));
  }

 private:
  // Feeds rows to a stream state in order; returns labels when known.
  template <typename Sink>
  std::vector<bool> stream_rows(std::istream& in, std::vector<std::string>& ids, Sink&& sink) {
    if (!from_stdin) {
      const Input data = load_input(io);
      ids = data.data.row_ids;
      online::StreamState state(data.data.cols(), opt);
      for (Index i = 0; i < data.data.rows(); ++i) sink(state.ingest(data.data.values.row(i)));
      if (state.phase() == online::Phase::filling)
        throw InvalidInput("stream of " + std::to_string(data.data.rows()) +
                           " rows is shorter than the buffer size " + std::to_string(opt.buffer));
      return data.labels;
    }
    std::optional<online::StreamState> state;
    std::optional<std::size_t> id_index;
    std::vector<std::string> header;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (csv::trim(line).empty()) continue;
      auto fields = csv::split_line(line);
      if (!state && header.empty() &&
          std::any_of(fields.begin(), fields.end(), [](const auto& s) { return !csv::parse_number(s); })) {
        header = std::move(fields);
        continue;
      }
      if (!id_index && !io.id_col.empty()) {
        csv::Table t;
        t.header = header;
        t.rows.push_back(fields);
        id_index = csv::column_index(t, io.id_col);
      }
      std::vector<double> values;
      std::string id;
      for (std::size_t c = 0; c < fields.size(); ++c) {
        if (id_index && c == *id_index) {
          id = fields[c];
          continue;
        }
        const auto v = csv::parse_number(fields[c]);
        if (!v || !std::isfinite(*v))
          throw InvalidInput("line " + std::to_string(line_no) + ", column " + std::to_string(c) +
                             ": " + (fields[c].empty() ? std::string("missing value")
                                                       : "non-numeric value '" + fields[c] + "'"));
        values.push_back(*v);
      }
      if (!state) state.emplace(static_cast<Index>(values.size()), opt);
      ids.push_back(id);
      const RowVector row = Eigen::Map<const RowVector>(values.data(), static_cast<Index>(values.size()));
      try {
        sink(state->ingest(row));
      } catch (const InvalidInput& e) {
        throw InvalidInput("line " + std::to_string(line_no) + ": " + e.what());
      }
    }
    return {};
  }
};

// ---------------------------------------------------------------------------
// baseline
// ---------------------------------------------------------------------------

struct BaselineCommand {
  InputFlags io;
  std::string method = "nmf";
  int k = 5;
  int top_n = 10;
  baselines::MuSchedule mu;
  baselines::GnmfParams gnmf;
  baselines::SnmfParams snmf;
  offline::SgdSchedule snmf_schedule;

  void attach(CLI::App* sub) {
    add_input_flags(sub, io);
    sub->add_option("--method", method, "Baseline to run")
        ->check(CLI::IsMember({"nmf", "gnmf", "snmf"}))
        ->capture_default_str();
    sub->add_option("--k", k, "Latent factors K")->capture_default_str();
    sub->add_option("--top-n", top_n, "Number of rows to flag")->capture_default_str();
    sub->add_option("--seed", mu.seed, "Random seed")->capture_default_str();
    sub->add_option("--max-iter", mu.max_iterations, "NMF/GNMF iteration cap")->capture_default_str();
    sub->add_option("--mu-tol", mu.tolerance, "NMF/GNMF relative objective change that ends the fit")
        ->capture_default_str();
    sub->add_option("--lambda", gnmf.lambda, "GNMF manifold regulariser")->capture_default_str();
    sub->add_option("--q", gnmf.q, "GNMF nearest neighbours")->capture_default_str();
    sub->add_option("--sigma", snmf.sigma, "SNMF Gaussian bandwidth; 0 = median pairwise distance")
        ->capture_default_str();
    add_sgd_flags(sub, snmf_schedule);
  }

  void run(const CLI::App& root, std::ostream& out, std::ostream& err) {
    const Input in = load_input(io);
    const Matrix& A = in.data.values;
    in.data.validate();
    if (top_n < 1 || top_n > A.rows()) throw InvalidInput("top-N must lie in [1, n]");
    AnomalyReport report;
    if (method == "nmf") {
      const auto fit = baselines::fit_nmf(A, k, mu);
      report = flag_top_n(anomaly_scores(A, fit.factors), top_n);
      err << "iterations " << fit.iterations << ", objective " << fit.objective_trace.back() << '\n';
    } else if (method == "gnmf") {
      const auto fit = baselines::fit_gnmf(A, k, gnmf, mu);
      report = flag_top_n(anomaly_scores(A, fit.factors), top_n);
      err << "iterations " << fit.iterations << ", objective " << fit.objective_trace.back() << '\n';
    } else {
      offline::SgdSchedule s = snmf_schedule;
      s.seed = mu.seed;
      const auto fit = baselines::fit_snmf(A, k, snmf, s);
      report = baselines::snmf_scores(fit.S, fit.W, top_n);
      err << "iterations " << fit.iterations << ", sigma " << fit.sigma << ", objective "
          << fit.objective_trace.back() << '\n';
    }
    const auto path = resolve_output(io, method);
    OutputFile f(path, out);
    write_report_csv(f.stream(), report, in.data.row_ids);
    report_detection(err, report, in.labels);
    write_sidecar(root, sidecar_path(io, path));
  }
};

// ---------------------------------------------------------------------------
// benchmark
// ---------------------------------------------------------------------------

struct BenchmarkCommand {
  std::string manifest;
  std::string methods = "ns-nmf,nmf,gnmf,snmf,ns-nmf-online";
  int seeds = 10;
  std::uint64_t first_seed = 0;
  std::string out_dir = "benchmark";
  int threads = 0;
  evaluation::MethodParams params;

  void attach(CLI::App* sub) {
    sub->add_option("--manifest", manifest, "TOML manifest, one [name] section per dataset")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--methods", methods, "Comma-separated methods")->capture_default_str();
    sub->add_option("--seeds", seeds, "Seeds per (dataset, method)")->capture_default_str();
    sub->add_option("--first-seed", first_seed, "Seeds are first-seed, first-seed + 1, ...")
        ->capture_default_str();
    sub->add_option("--out", out_dir, "Report directory")->capture_default_str();
    sub->add_option("--threads", threads, "Concurrent runs; 0 = NSNMF_THREADS or machine parallelism")
        ->capture_default_str();
    add_hyper_flags(sub, params.h);
    sub->add_option("--blocks", params.h.blocks, "NS-NMF block splits B")->capture_default_str();
    add_sgd_flags(sub, params.sgd);
    add_similarity_flags(sub, params.similarity);
    sub->add_option("--buffer", params.online.buffer, "Online buffer size z")->capture_default_str();
    sub->add_option("--lambda", params.gnmf.lambda, "GNMF manifold regulariser")->capture_default_str();
    sub->add_option("--q", params.gnmf.q, "GNMF nearest neighbours")->capture_default_str();
    sub->add_option("--sigma", params.snmf.sigma, "SNMF bandwidth; 0 = median distance")
        ->capture_default_str();
    sub->add_option("--max-iter", params.mu.max_iterations, "NMF/GNMF iteration cap")
        ->capture_default_str();
  }

  void run(const CLI::App& root, std::ostream& out, std::ostream& err) {
    if (seeds < 1) throw InvalidInput("--seeds must be >= 1");
    const auto method_list = evaluation::parse_methods(methods);
    params.h.validate();
    params.online.k = params.h.k;
    params.online.alpha = params.h.alpha;
    params.online.gamma = params.h.gamma;
    const auto datasets = evaluation::load_manifest(manifest);
    std::vector<std::uint64_t> seed_list;
    for (int s = 0; s < seeds; ++s) seed_list.push_back(first_seed + static_cast<std::uint64_t>(s));
    const int workers = threads == 0 ? worker_count() : threads;
    const auto report = evaluation::run_benchmark(datasets, method_list, params, seed_list, workers);
    evaluation::write_benchmark(report, datasets, out_dir);
    write_sidecar(root, (std::filesystem::path(out_dir) / "config.toml").string());
    evaluation::write_counts_csv(out, report);
    for (const auto& r : report.runs)
      if (!r.ok)
        err << "run failed: " << r.dataset << ' ' << evaluation::method_name(r.method) << " seed "
            << r.seed << ": " << r.error << '\n';
    if (report.friedman)
      err << "friedman chi^2 = " << report.friedman->chi_sq << ", p = " << report.friedman->p_value
          << '\n';
  }
};

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

inline int parse_and_dispatch(int argc, const char* const* argv, std::istream& in,
                              std::ostream& out, std::ostream& err) {
  CLI::App app{"Neighbourhood-structure-assisted NMF anomaly detection", "nsnmf"};
  app.set_config("--config", "", "TOML settings file; one [subcommand] section per command");
  app.require_subcommand(1);
  app.allow_config_extras(false);

  OfflineCommand offline_cmd;
  OnlineCommand online_cmd;
  BaselineCommand baseline_cmd;
  BenchmarkCommand benchmark_cmd;
  auto* off = app.add_subcommand("detect-offline", "Offline NS-NMF: MST similarity, block SGD, top-N");
  auto* onl = app.add_subcommand("detect-online", "Streaming NS-NMF with a buffered local MST");
  auto* base = app.add_subcommand("baseline", "Vanilla NMF, GNMF or SNMF detector");
  auto* bench = app.add_subcommand("benchmark", "Run methods over a dataset manifest");
  for (auto* sub : {off, onl, base, bench}) sub->configurable();
  offline_cmd.attach(off);
  online_cmd.attach(onl);
  baseline_cmd.attach(base);
  benchmark_cmd.attach(bench);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kInvalidInput;
  }

  try {
    if (off->parsed()) offline_cmd.run(app, out, err);
    else if (onl->parsed()) online_cmd.run(app, in, out, err);
    else if (base->parsed()) baseline_cmd.run(app, out, err);
    else if (bench->parsed()) benchmark_cmd.run(app, out, err);
    return kSuccess;
  } catch (const InvalidInput& e) {
    err << "nsnmf: error: " << e.what() << '\n';
    return kInvalidInput;
  } catch (const std::exception& e) {
    err << "nsnmf: failure: " << e.what() << '\n';
    return kRuntimeFailure;
  }
}

}  // namespace nsnmf::cli
