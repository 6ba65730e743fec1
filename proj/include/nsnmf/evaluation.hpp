// Benchmark harness: labelled dataset loading, P@N, tie-averaged ranks, the
// Friedman test and the multi-dataset, multi-method benchmark runner.

#pragma once

#include "nsnmf/baselines.hpp"
#include "nsnmf/common.hpp"
#include "nsnmf/csv.hpp"
#include "nsnmf/model.hpp"
#include "nsnmf/offline.hpp"
#include "nsnmf/online.hpp"

#include <CLI11.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <cctype>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

namespace nsnmf::evaluation {

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

struct LabeledDataset {
  std::string name;
  DataMatrix data;
  std::vector<bool> labels; // true = anomaly

  [[nodiscard]] Index outliers() const {
    return static_cast<Index>(std::count(labels.begin(), labels.end(), true));
  }

  void validate() const {
    if (static_cast<Index>(labels.size()) != data.rows())
      throw InvalidInput(name + ": label count does not match row count");
    if (outliers() < 1) throw InvalidInput(name + ": dataset has no labelled anomalies");
  }
};

struct LoadOptions {
  std::string label_column = "label";
  std::optional<std::string> id_column;
  bool normalize = false;
  std::string name;
};

// Per-column min-max scaling to [0, 1]; constant columns become 0.
inline void min_max_normalize(Matrix& A) {
  for (Index c = 0; c < A.cols(); ++c) {
    const double lo = A.col(c).minCoeff();
    const double hi = A.col(c).maxCoeff();
    if (hi > lo) A.col(c) = (A.col(c).array() - lo) / (hi - lo);
    else A.col(c).setZero();
  }
}

// Accepts numeric labels (non-zero = anomaly) or yes/no style words.
inline bool parse_label(const std::string& raw, std::size_t line) {
  std::string v;
  for (char c : raw) v += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (const auto num = csv::parse_number(v)) return *num != 0.0;
  if (v == "yes" || v == "true" || v == "outlier" || v == "anomaly" || v == "o") return true;
  if (v == "no" || v == "false" || v == "inlier" || v == "normal" || v == "n") return false;
  throw InvalidInput("line " + std::to_string(line) + ": unrecognised label '" + raw + "'");
}

inline LabeledDataset load_table(const csv::Table& t, const LoadOptions& opt) {
  const auto label = csv::column_index(t, opt.label_column);
  std::vector<std::size_t> skip{label};
  std::vector<std::string> ids;
  if (opt.id_column) {
    const auto c = csv::column_index(t, *opt.id_column);
    if (c == label) throw InvalidInput("id column and label column coincide");
    skip.push_back(c);
    ids = csv::column_strings(t, c);
  }
  Matrix values = csv::numeric_columns(t, skip);
  if (opt.normalize) min_max_normalize(values);
  LabeledDataset out;
  out.name = opt.name;
  out.data = DataMatrix(std::move(values), std::move(ids));
  out.labels.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    out.labels.push_back(parse_label(t.rows[r][label], t.line_numbers[r]));
  out.data.validate();
  out.validate();
  return out;
}

inline LabeledDataset load_csv(const std::string& path, LoadOptions opt) {
  if (opt.name.empty()) opt.name = std::filesystem::path(path).stem().string();
  return load_table(csv::read_table(path), opt);
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

inline Index true_positives(const AnomalyReport& report, const std::vector<bool>& labels) {
  if (static_cast<Index>(labels.size()) != report.size())
    throw InvalidInput("label count does not match score count");
  Index tp = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) tp += (report.flagged[i] && labels[i]) ? 1 : 0;
  return tp;
}

// |{o in O : rank(o) <= N}| / N with N the number of flagged rows.
inline double precision_at_n(const AnomalyReport& report, const std::vector<bool>& labels) {
  const Index n = report.flagged_count();
  if (n == 0) throw InvalidInput("P@N needs N >= 1");
  return static_cast<double>(true_positives(report, labels)) / static_cast<double>(n);
}

inline Index implied_false_alarms(const AnomalyReport& report, const std::vector<bool>& labels) {
  return report.flagged_count() - true_positives(report, labels);
}

// ---------------------------------------------------------------------------
// Ranks and the Friedman test
// ---------------------------------------------------------------------------

struct RankMatrix {
  Matrix ranks; // datasets x methods; 1 = best
  std::vector<std::string> datasets;
  std::vector<std::string> methods;

  [[nodiscard]] Index n_datasets() const { return ranks.rows(); }
  [[nodiscard]] Index n_methods() const { return ranks.cols(); }
  [[nodiscard]] RowVector mean_ranks() const { return ranks.colwise().mean(); }
};

// Higher performance gets the smaller rank; ties share the average rank.
inline RowVector rank_row(const RowVector& performance) {
  const Index m = performance.size();
  if (!performance.allFinite()) throw InvalidInput("performance table contains non-finite values");
  std::vector<Index> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return performance(a) > performance(b); });
  RowVector out(m);
  for (Index start = 0; start < m;) {
    Index end = start + 1;
    while (end < m && performance(order[static_cast<std::size_t>(end)]) ==
                          performance(order[static_cast<std::size_t>(start)]))
      ++end;
    const double shared = 0.5 * static_cast<double>(start + 1 + end);
    for (Index r = start; r < end; ++r) out(order[static_cast<std::size_t>(r)]) = shared;
    start = end;
  }
  return out;
}

inline RankMatrix rank_methods(const Matrix& performance, std::vector<std::string> datasets = {},
                               std::vector<std::string> methods = {}) {
  if (performance.rows() < 1 || performance.cols() < 1)
    throw InvalidInput("performance table is empty");
  RankMatrix out;
  out.ranks.resize(performance.rows(), performance.cols());
  for (Index d = 0; d < performance.rows(); ++d) out.ranks.row(d) = rank_row(performance.row(d));
  out.datasets = std::move(datasets);
  out.methods = std::move(methods);
  return out;
}

struct FriedmanResult {
  double chi_sq = 0.0;
  int df = 0;
  double p_value = 1.0;
};

// Upper tail of the chi-squared distribution.
inline double chi_squared_sf(double x, int df) {
  if (df < 1) throw InvalidInput("degrees of freedom must be >= 1");
  if (x <= 0.0) return 1.0;
  return boost::math::gamma_q(0.5 * df, 0.5 * x);
}

// chi^2_F = 12 n_d / (n_a (n_a + 1)) (sum_l mean_l^2 - n_a (n_a + 1)^2 / 4)
inline FriedmanResult friedman_statistic(const RankMatrix& ra) {
  const auto nd = static_cast<double>(ra.n_datasets());
  const auto na = static_cast<double>(ra.n_methods());
  if (ra.n_datasets() < 2 || ra.n_methods() < 2)
    throw InvalidInput("the Friedman test needs at least two datasets and two methods");
  const RowVector mean = ra.mean_ranks();
  FriedmanResult out;
  out.chi_sq = 12.0 * nd / (na * (na + 1.0)) * (mean.squaredNorm() - na * (na + 1.0) * (na + 1.0) / 4.0);
  out.chi_sq = std::max(out.chi_sq, 0.0);
  out.df = static_cast<int>(na) - 1;
  out.p_value = chi_squared_sf(out.chi_sq, out.df);
  return out;
}

// ---------------------------------------------------------------------------
// Benchmark runner
// ---------------------------------------------------------------------------

enum class Method { ns_nmf, ns_nmf_online, nmf, gnmf, snmf };

inline std::string method_name(Method m) {
  switch (m) {
    case Method::ns_nmf: return "ns-nmf";
    case Method::ns_nmf_online: return "ns-nmf-online";
    case Method::nmf: return "nmf";
    case Method::gnmf: return "gnmf";
    case Method::snmf: return "snmf";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  for (Method m : {Method::ns_nmf, Method::ns_nmf_online, Method::nmf, Method::gnmf, Method::snmf})
    if (method_name(m) == s) return m;
  throw InvalidInput("unknown method '" + s + "' (expected ns-nmf, ns-nmf-online, nmf, gnmf or snmf)");
}

inline std::vector<Method> parse_methods(const std::string& list) {
  std::vector<Method> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = csv::trim(item);
    if (item.empty()) continue;
    const Method m = parse_method(item);
    if (std::find(out.begin(), out.end(), m) != out.end())
      throw InvalidInput("method '" + item + "' listed twice");
    out.push_back(m);
  }
  if (out.empty()) throw InvalidInput("no methods given");
  return out;
}

struct MethodParams {
  HyperParams h{};
  offline::SgdSchedule sgd{};
  graph::SimilarityOptions similarity{graph::DuplicateCap::nearest_positive, 1e-12, false};
  baselines::MuSchedule mu{};
  baselines::GnmfParams gnmf{};
  baselines::SnmfParams snmf{};
  online::OnlineOptions online{};
};

// Anomaly scores of one (dataset, method, seed) run; N = |O|.
inline AnomalyReport run_method(Method m, const LabeledDataset& ds, const MethodParams& params,
                                std::uint64_t seed) {
  const Matrix& A = ds.data.values;
  const Index top_n = ds.outliers();
  switch (m) {
    case Method::ns_nmf: {
      HyperParams h = params.h;
      h.top_n = static_cast<int>(top_n);
      offline::SgdSchedule s = params.sgd;
      s.seed = seed;
      s.threads = 1;
      return offline::detect_offline(ds.data, h, s, params.similarity).report;
    }
    case Method::ns_nmf_online: {
      online::OnlineOptions o = params.online;
      o.seed = seed;
      return online::detect_online(ds.data, o, top_n).report;
    }
    case Method::nmf: {
      baselines::MuSchedule s = params.mu;
      s.seed = seed;
      return flag_top_n(anomaly_scores(A, baselines::fit_nmf(A, params.h.k, s).factors), top_n);
    }
    case Method::gnmf: {
      baselines::MuSchedule s = params.mu;
      s.seed = seed;
      return flag_top_n(
          anomaly_scores(A, baselines::fit_gnmf(A, params.h.k, params.gnmf, s).factors), top_n);
    }
    case Method::snmf: {
      offline::SgdSchedule s = params.sgd;
      s.seed = seed;
      const auto fit = baselines::fit_snmf(A, params.h.k, params.snmf, s);
      return baselines::snmf_scores(fit.S, fit.W, top_n);
    }
  }
  throw InvalidInput("unknown method");
}

struct RunResult {
  std::string dataset;
  Method method = Method::ns_nmf;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  Index true_positives = 0;
  double seconds = 0.0;
  AnomalyReport report;
};

struct CountSummary {
  double median = std::numeric_limits<double>::quiet_NaN();
  Index min = 0;
  Index max = 0;
  int runs = 0;
  int failures = 0;
};

struct BenchmarkReport {
  std::vector<std::string> datasets;
  std::vector<Index> totals; // |O| per dataset
  std::vector<Method> methods;
  std::vector<RunResult> runs;
  std::vector<std::vector<CountSummary>> counts; // [dataset][method]
  std::optional<RankMatrix> ranks;               // datasets with complete rows only
  std::optional<FriedmanResult> friedman;
};

inline double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 == 1 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

// Runs every (dataset, method, seed) combination on up to `threads` workers.
// A failing run is recorded and excluded from the aggregates.
inline BenchmarkReport run_benchmark(const std::vector<LabeledDataset>& datasets,
                                     const std::vector<Method>& methods, const MethodParams& params,
                                     const std::vector<std::uint64_t>& seeds, int threads = 1) {
  if (datasets.empty()) throw InvalidInput("no datasets to benchmark");
  if (methods.empty()) throw InvalidInput("no methods to benchmark");
  if (seeds.empty()) throw InvalidInput("no seeds given");
  BenchmarkReport out;
  out.methods = methods;
  for (const auto& ds : datasets) {
    ds.validate();
    out.datasets.push_back(ds.name);
    out.totals.push_back(ds.outliers());
  }

  const std::size_t nd = datasets.size();
  const std::size_t nm = methods.size();
  const std::size_t ns = seeds.size();
  out.runs.resize(nd * nm * ns);
  parallel_for(out.runs.size(), threads, [&](std::size_t job) {
    const std::size_t d = job / (nm * ns);
    const std::size_t m = (job / ns) % nm;
    const std::size_t s = job % ns;
    RunResult& r = out.runs[job];
    r.dataset = datasets[d].name;
    r.method = methods[m];
    r.seed = seeds[s];
    const auto start = std::chrono::steady_clock::now();
    try {
      r.report = run_method(methods[m], datasets[d], params, seeds[s]);
      r.true_positives = true_positives(r.report, datasets[d].labels);
      r.ok = true;
    } catch (const std::exception& e) {
      r.error = e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  });

  out.counts.assign(nd, std::vector<CountSummary>(nm));
  for (std::size_t d = 0; d < nd; ++d)
    for (std::size_t m = 0; m < nm; ++m) {
      CountSummary& c = out.counts[d][m];
      std::vector<double> tp;
      for (std::size_t s = 0; s < ns; ++s) {
        const RunResult& r = out.runs[(d * nm + m) * ns + s];
        if (!r.ok) {
          ++c.failures;
          continue;
        }
        tp.push_back(static_cast<double>(r.true_positives));
      }
      c.runs = static_cast<int>(tp.size());
      if (!tp.empty()) {
        c.median = median_of(tp);
        c.min = static_cast<Index>(*std::min_element(tp.begin(), tp.end()));
        c.max = static_cast<Index>(*std::max_element(tp.begin(), tp.end()));
      }
    }

  std::vector<std::string> ranked;
  std::vector<RowVector> rows;
  for (std::size_t d = 0; d < nd; ++d) {
    RowVector row(static_cast<Index>(nm));
    bool complete = true;
    for (std::size_t m = 0; m < nm; ++m) {
      complete = complete && out.counts[d][m].runs > 0;
      row(static_cast<Index>(m)) = out.counts[d][m].median / static_cast<double>(out.totals[d]);
    }
    if (!complete) {
      warn("dataset " + out.datasets[d] + " has a method without successful runs; left out of ranks");
      continue;
    }
    ranked.push_back(out.datasets[d]);
    rows.push_back(row);
  }
  if (!rows.empty()) {
    Matrix perf(static_cast<Index>(rows.size()), static_cast<Index>(nm));
    for (std::size_t i = 0; i < rows.size(); ++i) perf.row(static_cast<Index>(i)) = rows[i];
    std::vector<std::string> names;
    for (Method m : methods) names.push_back(method_name(m));
    out.ranks = rank_methods(perf, ranked, names);
    if (out.ranks->n_datasets() >= 2 && out.ranks->n_methods() >= 2)
      out.friedman = friedman_statistic(*out.ranks);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifest and report files
// ---------------------------------------------------------------------------

struct DatasetEntry {
  std::string name;
  std::string path; // resolved against the manifest directory
  LoadOptions load;
};

// TOML manifest, one table per dataset:
//   [WBC]
//   path = "wbc.csv"
//   label_column = "label"
//   id_column = "id"
//   normalize = true
inline std::vector<DatasetEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open manifest: " + path);
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigTOML().from_config(in);
  } catch (const CLI::Error& e) {
    throw InvalidInput("manifest " + path + ": " + e.what());
  }
  const auto base = std::filesystem::path(path).parent_path();
  std::vector<DatasetEntry> out;
  std::map<std::string, std::size_t> index;
  for (const auto& item : items) {
    if (item.name == "++" || item.name == "--") continue; // section markers
    if (item.parents.size() != 1)
      throw InvalidInput("manifest " + path + ": key '" + item.name +
                         "' must sit inside a [dataset] section");
    const std::string& section = item.parents.front();
    auto [it, fresh] = index.try_emplace(section, out.size());
    if (fresh) {
      DatasetEntry e;
      e.name = section;
      e.load.name = section;
      out.push_back(std::move(e));
    }
    DatasetEntry& e = out[it->second];
    const std::string value = item.inputs.empty() ? std::string() : item.inputs.front();
    if (item.name == "path") {
      const std::filesystem::path p(value);
      e.path = p.is_absolute() ? p.string() : (base / p).string();
    } else if (item.name == "label_column") {
      e.load.label_column = value;
    } else if (item.name == "id_column") {
      e.load.id_column = value;
    } else if (item.name == "normalize") {
      if (value != "true" && value != "false")
        throw InvalidInput("manifest " + path + ": normalize must be true or false");
      e.load.normalize = value == "true";
    } else {
      throw InvalidInput("manifest " + path + ": unknown key '" + item.name + "' in [" + section + "]");
    }
  }
  for (const auto& e : out)
    if (e.path.empty()) throw InvalidInput("manifest " + path + ": [" + e.name + "] has no path");
  if (out.empty()) throw InvalidInput("manifest " + path + " lists no datasets");
  return out;
}

inline std::vector<LabeledDataset> load_manifest(const std::string& path) {
  std::vector<LabeledDataset> out;
  for (const auto& e : read_manifest(path)) out.push_back(load_csv(e.path, e.load));
  return out;
}

inline void write_counts_csv(std::ostream& os, const BenchmarkReport& r) {
  os << "dataset";
  for (Method m : r.methods) {
    const auto n = method_name(m);
    os << ',' << n << "_median," << n << "_min," << n << "_max," << n << "_failures";
  }
  os << ",total\n";
  for (std::size_t d = 0; d < r.datasets.size(); ++d) {
    os << r.datasets[d];
    for (std::size_t m = 0; m < r.methods.size(); ++m) {
      const auto& c = r.counts[d][m];
      if (c.runs > 0) os << ',' << c.median << ',' << c.min << ',' << c.max;
      else os << ",NA,NA,NA";
      os << ',' << c.failures;
    }
    os << ',' << r.totals[d] << '\n';
  }
}

inline void write_ranks_csv(std::ostream& os, const RankMatrix& ra) {
  os << "dataset";
  for (const auto& m : ra.methods) os << ',' << m;
  os << '\n';
  for (Index d = 0; d < ra.n_datasets(); ++d) {
    os << ra.datasets[static_cast<std::size_t>(d)];
    for (Index m = 0; m < ra.n_methods(); ++m) os << ',' << ra.ranks(d, m);
    os << '\n';
  }
  const RowVector mean = ra.mean_ranks();
  os << "mean";
  for (Index m = 0; m < mean.size(); ++m) os << ',' << mean(m);
  os << '\n';
}

inline void write_friedman(std::ostream& os, const BenchmarkReport& r) {
  if (!r.friedman) {
    os << "friedman: not computed (needs at least two fully ranked datasets and two methods)\n";
    return;
  }
  const auto old = os.precision();
  os << std::setprecision(10);
  os << "n_datasets " << r.ranks->n_datasets() << '\n'
     << "n_methods " << r.ranks->n_methods() << '\n'
     << "chi_squared " << r.friedman->chi_sq << '\n'
     << "df " << r.friedman->df << '\n'
     << "p_value " << r.friedman->p_value << '\n';
  os.precision(old);
}

inline std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s) out += std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ? c : '_';
  return out;
}

// counts.csv, ranks.csv, friedman.txt, runs.csv and scores/<dataset>_<method>_seed<k>.csv.
inline void write_benchmark(const BenchmarkReport& r, const std::vector<LabeledDataset>& datasets,
                            const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "scores");
  const auto open = [&](const fs::path& p) {
    std::ofstream f(p);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    return f;
  };
  {
    auto f = open(fs::path(dir) / "counts.csv");
    write_counts_csv(f, r);
  }
  if (r.ranks) {
    auto f = open(fs::path(dir) / "ranks.csv");
    write_ranks_csv(f, *r.ranks);
  }
  {
    auto f = open(fs::path(dir) / "friedman.txt");
    write_friedman(f, r);
  }
  {
    auto f = open(fs::path(dir) / "runs.csv");
    f << "dataset,method,seed,ok,true_positives,seconds,error\n";
    for (const auto& run : r.runs) {
      std::string error;
      for (char c : run.error) error += c == '"' ? std::string("\"\"") : std::string(1, c);
      f << run.dataset << ',' << method_name(run.method) << ',' << run.seed << ','
        << (run.ok ? 1 : 0) << ',' << run.true_positives << ',' << run.seconds << ",\"" << error
        << "\"\n";
    }
  }
  std::map<std::string, const LabeledDataset*> by_name;
  for (const auto& ds : datasets) by_name[ds.name] = &ds;
  for (const auto& run : r.runs) {
    if (!run.ok) continue;
    auto f = open(fs::path(dir) / "scores" /
                  (sanitize(run.dataset) + "_" + method_name(run.method) + "_seed" +
                   std::to_string(run.seed) + ".csv"));
    const auto* ds = by_name.at(run.dataset);
    write_report_csv(f, run.report, ds->data.row_ids);
  }
}

}  // namespace nsnmf::evaluation
