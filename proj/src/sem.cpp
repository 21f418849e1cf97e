#include "dpdag/sem.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "dpdag/errors.hpp"
#include "dpdag/kernels.hpp"

namespace dpdag {

namespace {
constexpr double kJitterStart = 1e-8;
constexpr double kJitterMax = 1e-2;
// Decorrelates the graph and mechanism streams drawn from one seed.
constexpr std::uint64_t kMechanismStream = 0x5DEECE66DULL;
}  // namespace

std::string to_string(GraphKind k) { return k == GraphKind::ER ? "ER" : "SF"; }

GraphKind parse_graph_kind(const std::string& s) {
  if (s == "er" || s == "ER") return GraphKind::ER;
  if (s == "sf" || s == "SF") return GraphKind::SF;
  throw ParameterError("unknown graph kind '" + s + "' (expected er|sf)");
}

void GenSpec::validate() const {
  if (n < 2) throw ParameterError("gen spec: need at least 2 nodes");
  const std::size_t max_edges = n * (n - 1) / 2;
  if (m > max_edges) {
    throw ParameterError("gen spec: m=" + std::to_string(m) + " exceeds n(n-1)/2=" + std::to_string(max_edges));
  }
  if (kind == GraphKind::SF && m < 1) throw ParameterError("gen spec: scale-free graphs need m >= 1");
  if (samples < 1) throw ParameterError("gen spec: need at least one sample");
  if (!(noise_std > 0.0)) throw ParameterError("gen spec: noise_std must be positive");
  if (!(bandwidth > 0.0)) throw ParameterError("gen spec: bandwidth must be positive");
}

std::string GenSpec::label() const {
  return to_string(kind) + "-" + std::to_string(n) + "-" + std::to_string(m);
}

nlohmann::json to_json(const GenSpec& s) {
  return {{"kind", to_string(s.kind)}, {"n", s.n},
          {"m", s.m},                  {"samples", s.samples},
          {"noise_std", s.noise_std},  {"bandwidth", s.bandwidth},
          {"standardize", s.standardize}, {"seed", s.seed}};
}

GenSpec gen_spec_from_json(const nlohmann::json& j) {
  GenSpec s;
  s.kind = parse_graph_kind(j.value("kind", std::string("ER")));
  s.n = j.value("n", s.n);
  s.m = j.value("m", s.m);
  s.samples = j.value("samples", s.samples);
  s.noise_std = j.value("noise_std", s.noise_std);
  s.bandwidth = j.value("bandwidth", s.bandwidth);
  s.standardize = j.value("standardize", s.standardize);
  s.seed = j.value("seed", s.seed);
  s.validate();
  return s;
}

Split make_split(std::size_t rows, std::uint64_t seed) {
  std::vector<std::size_t> idx(rows);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(rows)));
  const auto n_val = std::min(rows - n_train, static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(rows))));
  Split s;
  s.train.assign(idx.begin(), idx.begin() + n_train);
  s.val.assign(idx.begin() + n_train, idx.begin() + n_train + n_val);
  s.test.assign(idx.begin() + n_train + n_val, idx.end());
  return s;
}

Tensor SemDataset::rows(const std::vector<std::size_t>& idx) const {
  Tensor out(idx.size(), x.cols());
  for (std::size_t r = 0; r < idx.size(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) = x(idx[r], c);
  return out;
}

// --- graphs ------------------------------------------------------------------

namespace {

AdjacencyMatrix gen_er(const GenSpec& spec, std::mt19937_64& rng) {
  std::vector<std::size_t> order(spec.n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (parent, child) consistent with order
  for (std::size_t a = 0; a < spec.n; ++a)
    for (std::size_t b = a + 1; b < spec.n; ++b) pairs.emplace_back(order[a], order[b]);
  // partial Fisher-Yates: first m entries are a uniform m-subset
  for (std::size_t k = 0; k < spec.m; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, pairs.size() - 1);
    std::swap(pairs[k], pairs[pick(rng)]);
  }
  pairs.resize(spec.m);
  return AdjacencyMatrix::from_edges(spec.n, pairs);
}

AdjacencyMatrix gen_sf(const GenSpec& spec, std::mt19937_64& rng) {
  const std::size_t per_node =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(static_cast<double>(spec.m) / spec.n)));
  std::vector<double> degree(spec.n, 0.0);
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t t = 1; t < spec.n; ++t) {
    const std::size_t k = std::min(per_node, t);
    std::vector<bool> chosen(t, false);
    for (std::size_t e = 0; e < k; ++e) {
      // weight degree + 1 so isolated nodes remain reachable
      double total = 0.0;
      for (std::size_t v = 0; v < t; ++v)
        if (!chosen[v]) total += degree[v] + 1.0;
      std::uniform_real_distribution<double> u(0.0, total);
      double r = u(rng);
      std::size_t pick = t;
      for (std::size_t v = 0; v < t; ++v) {
        if (chosen[v]) continue;
        pick = v;
        r -= degree[v] + 1.0;
        if (r < 0.0) break;
      }
      chosen[pick] = true;
      edges.emplace_back(t, pick);
    }
    for (std::size_t v = 0; v < t; ++v)
      if (chosen[v]) {
        degree[v] += 1.0;
        degree[t] += 1.0;
      }
  }
  std::vector<std::size_t> relabel(spec.n);
  std::iota(relabel.begin(), relabel.end(), std::size_t{0});
  std::shuffle(relabel.begin(), relabel.end(), rng);
  for (auto& [p, c] : edges) {
    p = relabel[p];
    c = relabel[c];
  }
  return AdjacencyMatrix::from_edges(spec.n, edges);
}

}  // namespace

AdjacencyMatrix gen_graph(const GenSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  return spec.kind == GraphKind::ER ? gen_er(spec, rng) : gen_sf(spec, rng);
}

// --- mechanisms --------------------------------------------------------------

std::vector<double> gp_draw(const Tensor& parents, double bandwidth, std::mt19937_64& rng) {
  const std::size_t rows = parents.rows(), k = parents.cols();
  std::map<std::vector<double>, std::size_t> unique_index;
  std::vector<std::size_t> slot(rows);
  std::vector<std::vector<double>> uniques;
  for (std::size_t r = 0; r < rows; ++r) {
    std::vector<double> key(parents.ptr() + r * k, parents.ptr() + (r + 1) * k);
    auto [it, inserted] = unique_index.emplace(key, uniques.size());
    if (inserted) uniques.push_back(std::move(key));
    slot[r] = it->second;
  }
  const std::size_t u = uniques.size();
  Tensor points(u, k);
  for (std::size_t r = 0; r < u; ++r)
    for (std::size_t c = 0; c < k; ++c) points(r, c) = uniques[r][c];
  const Tensor gram = kernels::rbf_gram(points, bandwidth);
  const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> kmat(gram.ptr(), u, u);

  Eigen::LLT<Eigen::MatrixXd> llt;
  bool ok = false;
  for (double jitter = kJitterStart; jitter <= kJitterMax * (1.0 + 1e-12); jitter *= 2.0) {
    Eigen::MatrixXd jittered = kmat;
    jittered.diagonal().array() += jitter;
    llt.compute(jittered);
    if (llt.info() == Eigen::Success) {
      ok = true;
      break;
    }
  }
  if (!ok) {
    throw GenerationError("GP Cholesky failed after jitter " + std::to_string(kJitterMax));
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd z(u);
  for (std::size_t r = 0; r < u; ++r) z(r) = normal(rng);
  const Eigen::VectorXd f = llt.matrixL() * z;
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) out[r] = f(slot[r]);
  return out;
}

SemDataset gen_mechanisms_and_sample(const AdjacencyMatrix& truth, const GenSpec& spec) {
  spec.validate();
  if (truth.n() != spec.n) throw DimensionError("gen_mechanisms_and_sample: truth has " + std::to_string(truth.n()) + " nodes, spec " + std::to_string(spec.n));
  std::mt19937_64 rng(spec.seed ^ kMechanismStream);
  std::normal_distribution<double> noise(0.0, spec.noise_std);
  const std::size_t rows = spec.samples;
  SemDataset ds;
  ds.name = spec.label() + "-s" + std::to_string(spec.seed);
  ds.x = Tensor(rows, spec.n);
  ds.truth = truth;
  for (std::size_t node : topological_order(truth)) {
    const auto pa = truth.parents(node);
    std::vector<double> f(rows, 0.0);
    if (!pa.empty()) {
      Tensor p(rows, pa.size());
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < pa.size(); ++c) p(r, c) = ds.x(r, pa[c]);
      try {
        f = gp_draw(p, spec.bandwidth, rng);
      } catch (const GenerationError& e) {
        throw GenerationError(std::string(e.what()) + " for node " + std::to_string(node + 1) + " (seed " +
                              std::to_string(spec.seed) + ")");
      }
    }
    for (std::size_t r = 0; r < rows; ++r) ds.x(r, node) = f[r] + noise(rng);
  }
  ds.meta["generator"] = to_json(spec);
  ds.meta["standardized"] = spec.standardize;
  if (spec.standardize) {
    auto [means, stds] = standardize_columns(ds.x);
    ds.meta["column_means"] = means;
    ds.meta["column_stds"] = stds;
  }
  ds.split = make_split(rows, spec.seed);
  ds.meta["split_seed"] = spec.seed;
  return ds;
}

SemDataset generate_dataset(const GenSpec& spec) { return gen_mechanisms_and_sample(gen_graph(spec), spec); }

std::pair<std::vector<double>, std::vector<double>> standardize_columns(Tensor& x) {
  const std::size_t rows = x.rows(), cols = x.cols();
  std::vector<double> means(cols, 0.0), stds(cols, 0.0);
  for (std::size_t c = 0; c < cols; ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < rows; ++r) s += x(r, c);
    means[c] = s / static_cast<double>(rows);
    double v = 0.0;
    for (std::size_t r = 0; r < rows; ++r) v += (x(r, c) - means[c]) * (x(r, c) - means[c]);
    stds[c] = std::sqrt(v / static_cast<double>(rows));
    const double div = stds[c] > 0.0 ? stds[c] : 1.0;
    for (std::size_t r = 0; r < rows; ++r) x(r, c) = (x(r, c) - means[c]) / div;
  }
  return {means, stds};
}

// --- CSV ---------------------------------------------------------------------

namespace {

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream s(line);
  while (std::getline(s, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

bool parse_double(std::string cell, double& out) {
  const auto b = cell.find_first_not_of(" \t\r");
  const auto e = cell.find_last_not_of(" \t\r");
  if (b == std::string::npos) return false;
  cell = cell.substr(b, e - b + 1);
  char* end = nullptr;
  errno = 0;
  out = std::strtod(cell.c_str(), &end);
  return end == cell.c_str() + cell.size() && errno != ERANGE && std::isfinite(out);
}

}  // namespace

Tensor read_csv(std::istream& in) {
  std::vector<double> data;
  std::size_t cols = 0, rows = 0, lineno = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_commas(line);
    std::vector<double> values(cells.size());
    std::size_t numeric = 0;
    for (std::size_t k = 0; k < cells.size(); ++k) numeric += parse_double(cells[k], values[k]) ? 1 : 0;
    if (rows == 0 && cols == 0 && numeric == 0) {
      cols = cells.size();  // header
      continue;
    }
    if (numeric != cells.size()) {
      throw ParseError("csv line " + std::to_string(lineno) + ": non-numeric cell");
    }
    if (cols == 0) cols = cells.size();
    if (cells.size() != cols) {
      throw ParseError("csv line " + std::to_string(lineno) + ": expected " + std::to_string(cols) + " columns, got " +
                       std::to_string(cells.size()));
    }
    data.insert(data.end(), values.begin(), values.end());
    ++rows;
  }
  if (rows == 0) throw ParseError("csv: no data rows");
  return Tensor(rows, cols, std::move(data));
}

void write_csv(std::ostream& out, const Tensor& x) {
  char buf[32];
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", x(r, c));
      out << (c ? "," : "") << buf;
    }
    out << '\n';
  }
}

SemDataset load_csv(const std::string& path, const std::string& truth_path, std::uint64_t split_seed,
                    bool standardize) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open csv '" + path + "'");
  SemDataset ds;
  ds.x = read_csv(in);
  ds.truth = read_edge_list_file(truth_path, ds.x.cols());
  ds.name = std::filesystem::path(path).stem().string();
  ds.split = make_split(ds.x.rows(), split_seed);
  ds.meta["standardized"] = standardize;
  ds.meta["split_seed"] = split_seed;
  ds.meta["source"] = path;
  if (standardize) {
    auto [means, stds] = standardize_columns(ds.x);
    ds.meta["column_means"] = means;
    ds.meta["column_stds"] = stds;
  }
  return ds;
}

void save_dataset(const std::string& dir, const SemDataset& ds) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  {
    std::ofstream out(fs::path(dir) / "data.csv");
    write_csv(out, ds.x);
  }
  {
    std::ofstream out(fs::path(dir) / "truth.edges");
    write_edge_list(out, ds.truth);
  }
  nlohmann::json meta = ds.meta;
  meta["name"] = ds.name;
  meta["n"] = ds.n();
  meta["samples"] = ds.samples();
  meta["edges"] = ds.truth.edge_count();
  meta["split"] = {{"train", ds.split.train}, {"val", ds.split.val}, {"test", ds.split.test}};
  std::ofstream out(fs::path(dir) / "meta.json");
  out << meta.dump(2) << '\n';
}

SemDataset load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  std::ifstream in(root / "data.csv");
  if (!in) throw ParseError("dataset '" + dir + "': missing data.csv");
  SemDataset ds;
  ds.x = read_csv(in);
  ds.truth = read_edge_list_file((root / "truth.edges").string(), ds.x.cols());
  std::ifstream meta_in(root / "meta.json");
  if (meta_in) {
    try {
      meta_in >> ds.meta;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("dataset '" + dir + "': bad meta.json: " + e.what());
    }
  }
  ds.name = ds.meta.value("name", root.filename().string());
  if (ds.meta.contains("split")) {
    const auto& s = ds.meta["split"];
    ds.split.train = s.at("train").get<std::vector<std::size_t>>();
    ds.split.val = s.at("val").get<std::vector<std::size_t>>();
    ds.split.test = s.at("test").get<std::vector<std::size_t>>();
    for (const auto* part : {&ds.split.train, &ds.split.val, &ds.split.test})
      for (std::size_t r : *part)
        if (r >= ds.x.rows()) throw ParseError("dataset '" + dir + "': split index out of range");
    ds.meta.erase("split");
  } else {
    ds.split = make_split(ds.x.rows(), ds.meta.value("split_seed", std::uint64_t{0}));
  }
  return ds;
}

}  // namespace dpdag
