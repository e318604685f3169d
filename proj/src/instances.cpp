#include "otwb/instances.hpp"

#include "otwb/error.hpp"
#include "otwb/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace otwb {

using json = nlohmann::json;

namespace {

void require_finite_nonnegative(const Vector& v, const char* what) {
  for (Index i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw InvalidInstance(std::string(what) + ": entry " + std::to_string(i) + " is not finite");
    }
    if (v[i] < 0.0) {
      throw InvalidInstance(std::string(what) + ": entry " + std::to_string(i) + " is negative");
    }
  }
}

void require_square_finite_nonnegative(const Matrix& c) {
  if (c.rows() != c.cols() || c.rows() == 0) {
    throw InvalidInstance("cost matrix must be square and non-empty, got " +
                          std::to_string(c.rows()) + "x" + std::to_string(c.cols()));
  }
  if (!c.allFinite()) throw InvalidInstance("cost matrix has non-finite entries");
  if ((c.array() < 0.0).any()) throw InvalidInstance("cost matrix has negative entries");
}

}  // namespace

Histogram Histogram::from_values(Vector values) {
  if (values.size() == 0) throw InvalidInstance("histogram is empty");
  require_finite_nonnegative(values, "histogram");
  const double total = values.sum();
  if (std::abs(total - 1.0) > kAcceptTolerance) {
    throw InvalidInstance("histogram mass " + std::to_string(total) +
                          " differs from 1 by more than 1e-6");
  }
  if (std::abs(total - 1.0) > kExactTolerance) values /= total;
  return Histogram(std::move(values));
}

Histogram Histogram::normalized(Vector weights) {
  if (weights.size() == 0) throw InvalidInstance("histogram is empty");
  require_finite_nonnegative(weights, "histogram");
  const double total = weights.sum();
  if (!(total > 0.0)) throw InvalidInstance("histogram has zero mass");
  weights /= total;
  return Histogram(std::move(weights));
}

double CostMatrix::offset(const Vector& mu, const Vector& nu) const {
  return row_shift_.dot(mu) + col_shift_.dot(nu);
}

CostMatrix normalize_cost(const Matrix& raw) {
  require_square_finite_nonnegative(raw);
  CostMatrix c;
  c.raw_ = raw;
  c.row_shift_ = raw.rowwise().minCoeff();
  c.entries_ = raw.colwise() - c.row_shift_;
  c.col_shift_ = c.entries_.colwise().minCoeff().transpose();
  c.entries_.rowwise() -= c.col_shift_.transpose();
  // Exact zeros where the minima were taken; guards against -0 and 1-ulp noise.
  c.entries_ = c.entries_.cwiseMax(0.0);
  c.max_entry_ = c.entries_.maxCoeff();
  return c;
}

CostMatrix normalize_cost_rows(const Matrix& raw) {
  require_square_finite_nonnegative(raw);
  CostMatrix c;
  c.raw_ = raw;
  c.row_shift_ = raw.rowwise().minCoeff();
  c.entries_ = (raw.colwise() - c.row_shift_).cwiseMax(0.0);
  c.col_shift_ = Vector::Zero(raw.cols());
  c.max_entry_ = c.entries_.maxCoeff();
  return c;
}

OtInstance OtInstance::make(Histogram mu, Histogram nu, const Matrix& raw_cost) {
  if (mu.size() != nu.size() || mu.size() != raw_cost.rows()) {
    throw InvalidInstance("marginal sizes and cost dimension disagree");
  }
  OtInstance inst;
  inst.n = mu.size();
  inst.mu = std::move(mu);
  inst.nu = std::move(nu);
  inst.cost = normalize_cost(raw_cost);
  // A zero cost still needs a nondegenerate box for the step-size formulas.
  inst.lambda = std::max(inst.cost.max_entry() / 2.0, 1e-12);
  return inst;
}

bool WbInstance::shared_cost() const {
  return std::all_of(costs.begin(), costs.end(),
                     [&](const auto& c) { return c.get() == costs.front().get(); });
}

double WbInstance::offset() const {
  double total = 0.0;
  for (Index l = 0; l < m; ++l) {
    total += weights[l] * cost(l).row_offset(marginals[static_cast<std::size_t>(l)].values());
  }
  return total;
}

WbInstance WbInstance::make(Vector weights, std::vector<Histogram> marginals,
                            const std::vector<Matrix>& raw_costs) {
  const auto m = static_cast<Index>(marginals.size());
  if (m < 2) throw InvalidInstance("a barycenter needs at least two marginals");
  if (weights.size() != m) throw InvalidInstance("one weight per marginal is required");
  for (Index l = 0; l < m; ++l) {
    if (!std::isfinite(weights[l]) || !(weights[l] > 0.0)) {
      throw InvalidInstance("barycenter weights must be strictly positive");
    }
  }
  if (std::abs(weights.sum() - 1.0) > Histogram::kExactTolerance) {
    throw InvalidInstance("barycenter weights must sum to 1");
  }
  const Index n = marginals.front().size();
  for (const auto& h : marginals) {
    if (h.size() != n) throw InvalidInstance("all marginals must have the same size");
  }
  if (raw_costs.size() != 1 && static_cast<Index>(raw_costs.size()) != m) {
    throw InvalidInstance("give either one shared cost matrix or one per marginal");
  }

  WbInstance inst;
  inst.n = n;
  inst.m = m;
  inst.weights = std::move(weights);
  inst.marginals = std::move(marginals);
  std::vector<std::shared_ptr<const CostMatrix>> normalized;
  for (const auto& c : raw_costs) {
    if (c.rows() != n) throw InvalidInstance("cost dimension disagrees with marginal size");
    normalized.push_back(std::make_shared<const CostMatrix>(normalize_cost_rows(c)));
  }
  double max_entry = 0.0;
  for (Index l = 0; l < m; ++l) {
    inst.costs.push_back(normalized.size() == 1 ? normalized.front()
                                                : normalized[static_cast<std::size_t>(l)]);
    max_entry = std::max(max_entry, inst.costs.back()->max_entry());
  }
  inst.lambda = std::max(max_entry / 2.0, 1e-12);
  return inst;
}

UnbalancedOtInstance UnbalancedOtInstance::make(Histogram mu, Vector nu, const Matrix& raw_cost) {
  if (mu.size() != nu.size() || mu.size() != raw_cost.rows()) {
    throw InvalidInstance("marginal sizes and cost dimension disagree");
  }
  require_finite_nonnegative(nu, "second marginal");
  UnbalancedOtInstance inst;
  inst.n = mu.size();
  inst.mu = std::move(mu);
  inst.nu = std::move(nu);
  inst.cost = normalize_cost_rows(raw_cost);
  return inst;
}

// ---------------------------------------------------------------------------

Vector uniform_grid(double lo, double hi, Index n) {
  if (n == 1) return Vector::Constant(1, lo);
  return Vector::LinSpaced(n, lo, hi);
}

Vector gaussian_density(const Vector& grid, double mean, double stddev) {
  const double norm = 1.0 / (stddev * std::sqrt(2.0 * std::numbers::pi));
  return grid.unaryExpr([&](double x) {
    const double z = (x - mean) / stddev;
    return norm * std::exp(-0.5 * z * z);
  });
}

Matrix grid_distance_cost(const Vector& grid, bool squared) {
  const Index n = grid.size();
  Matrix c(n, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < n; ++i) {
      const double d = std::abs(grid[i] - grid[j]);
      c(i, j) = squared ? d * d : d;
    }
  }
  return c;
}

Matrix pixel_distance_cost(Index n_pix, bool squared) {
  const Index n = n_pix * n_pix;
  Matrix c(n, n);
  for (Index a = 0; a < n; ++a) {
    const double ra = static_cast<double>(a / n_pix), ca = static_cast<double>(a % n_pix);
    for (Index b = 0; b < n; ++b) {
      const double rb = static_cast<double>(b / n_pix), cb = static_cast<double>(b % n_pix);
      const double d2 = (ra - rb) * (ra - rb) + (ca - cb) * (ca - cb);
      c(a, b) = squared ? d2 : std::sqrt(d2);
    }
  }
  return c;
}

OtInstance gen_gaussian_instance(Index n, std::uint64_t /*seed*/) {
  if (n < 2) throw InvalidInstance("gaussian instance needs n >= 2");
  const Vector grid = uniform_grid(0.0, 10.0, n);
  Vector mu = gaussian_density(grid, 3.0, 1.0) + gaussian_density(grid, 7.0, 1.0);
  Vector nu = gaussian_density(grid, 5.0, 1.0);
  return OtInstance::make(Histogram::normalized(std::move(mu)), Histogram::normalized(std::move(nu)),
                          grid_distance_cost(grid));
}

OtInstance gen_random_instance(Index n, std::uint64_t seed) {
  if (n < 1) throw InvalidInstance("random instance needs n >= 1");
  SplitMix64 rng(seed);
  Vector mu(n), nu(n);
  for (Index i = 0; i < n; ++i) mu[i] = rng.uniform();
  for (Index i = 0; i < n; ++i) nu[i] = rng.uniform();
  Matrix c(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) c(i, j) = rng.uniform();
  }
  return OtInstance::make(Histogram::normalized(std::move(mu)), Histogram::normalized(std::move(nu)),
                          c);
}

Matrix corner_image(Index n_pix) {
  Matrix img(n_pix, n_pix);
  for (Index i = 0; i < n_pix; ++i) {
    for (Index j = 0; j < n_pix; ++j) {
      img(i, j) = std::max(0.0, 1.0 - 2.0 * static_cast<double>(i + j) / static_cast<double>(n_pix));
    }
  }
  return img;
}

OtInstance gen_corner_to_dense(Index n_pix, bool squared) {
  if (n_pix < 2) throw InvalidInstance("corner instance needs n_pix >= 2");
  const Index n = n_pix * n_pix;
  return OtInstance::make(image_histogram(corner_image(n_pix)),
                          Histogram::normalized(Vector::Ones(n)), pixel_distance_cost(n_pix, squared));
}

Matrix gen_blob_image(Index n_pix, std::uint64_t seed) {
  SplitMix64 rng(seed);
  Matrix img = Matrix::Zero(n_pix, n_pix);
  const double size = static_cast<double>(n_pix);
  // A random quadratic stroke with a few Gaussian blobs stamped along it.
  const double x0 = rng.uniform(0.25, 0.75) * size, y0 = rng.uniform(0.2, 0.4) * size;
  const double x1 = rng.uniform(0.25, 0.75) * size, y1 = rng.uniform(0.6, 0.8) * size;
  const double bend = rng.uniform(-0.25, 0.25) * size;
  const int blobs = 4 + static_cast<int>(rng.below(4));
  const double width = std::max(0.6, 0.06 * size);
  for (int b = 0; b < blobs; ++b) {
    const double t = blobs == 1 ? 0.5 : static_cast<double>(b) / (blobs - 1);
    const double cx = (1 - t) * x0 + t * x1 + bend * 4.0 * t * (1 - t);
    const double cy = (1 - t) * y0 + t * y1;
    const double amp = rng.uniform(0.5, 1.0);
    for (Index i = 0; i < n_pix; ++i) {
      for (Index j = 0; j < n_pix; ++j) {
        const double dy = static_cast<double>(i) - cy, dx = static_cast<double>(j) - cx;
        img(i, j) += amp * std::exp(-(dx * dx + dy * dy) / (2.0 * width * width));
      }
    }
  }
  // Quantize like an 8-bit scan, which also produces exact zeros.
  const double peak = img.maxCoeff();
  return img.unaryExpr([&](double v) { return std::floor(255.0 * v / peak) ; });
}

Histogram image_histogram(const Matrix& image) {
  const Index n_pix = image.rows();
  Vector v(image.size());
  // Row-major pixel order to match pixel_distance_cost.
  for (Index i = 0; i < n_pix; ++i) {
    for (Index j = 0; j < image.cols(); ++j) v[i * image.cols() + j] = image(i, j);
  }
  return Histogram::normalized(std::move(v));
}

OtInstance image_pair_instance(const Matrix& a, const Matrix& b, bool squared) {
  if (a.rows() != a.cols() || a.rows() != b.rows() || a.cols() != b.cols()) {
    throw InvalidInstance("image pair must be square and of equal size");
  }
  return OtInstance::make(image_histogram(a), image_histogram(b),
                          pixel_distance_cost(a.rows(), squared));
}

GaussianWbCase gen_gaussian_wb(Index m, Index n, std::uint64_t seed) {
  if (m < 2 || n < 2) throw InvalidInstance("gaussian barycenter needs m >= 2 and n >= 2");
  SplitMix64 rng(seed);
  GaussianWbCase out;
  out.grid = uniform_grid(-10.0, 10.0, n);
  std::vector<Histogram> marginals;
  for (Index l = 0; l < m; ++l) {
    out.means.push_back(rng.uniform(-4.0, 4.0));
    out.stddevs.push_back(rng.uniform(0.6, 1.4));
    marginals.push_back(Histogram::normalized(gaussian_density(out.grid, out.means.back(),
                                                               out.stddevs.back())));
  }
  Matrix cost = grid_distance_cost(out.grid, true);
  cost /= cost.maxCoeff();
  out.instance = WbInstance::make(Vector::Constant(m, 1.0 / static_cast<double>(m)),
                                  std::move(marginals), {cost});
  return out;
}

// ---------------------------------------------------------------------------

namespace {

json vector_json(const Vector& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

json matrix_json(const Matrix& c) {
  json rows = json::array();
  for (Index i = 0; i < c.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(c.cols()));
    for (Index j = 0; j < c.cols(); ++j) row[static_cast<std::size_t>(j)] = c(i, j);
    rows.push_back(row);
  }
  return rows;
}

const json& field(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw ParseError("missing field '" + std::string(key) + "' in " + where);
  }
  return obj.at(key);
}

Vector parse_vector(const json& j, const std::string& where, Index expected) {
  if (!j.is_array()) throw ParseError(where + ": expected an array of numbers");
  if (expected >= 0 && static_cast<Index>(j.size()) != expected) {
    throw ParseError(where + ": expected " + std::to_string(expected) + " entries, got " +
                     std::to_string(j.size()));
  }
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) {
      throw ParseError(where + "[" + std::to_string(i) + "]: expected a number");
    }
    v[static_cast<Index>(i)] = j[i].get<double>();
  }
  return v;
}

Matrix parse_matrix(const json& j, const std::string& where, Index n) {
  if (!j.is_array() || static_cast<Index>(j.size()) != n) {
    throw ParseError(where + ": expected " + std::to_string(n) + " rows");
  }
  Matrix c(n, n);
  for (Index i = 0; i < n; ++i) {
    const Vector row = parse_vector(j[static_cast<std::size_t>(i)],
                                    where + "[" + std::to_string(i) + "]", n);
    c.row(i) = row.transpose();
  }
  return c;
}

Histogram parse_histogram(const json& j, const std::string& where, Index n) {
  try {
    return Histogram::from_values(parse_vector(j, where, n));
  } catch (const InvalidInstance& e) {
    throw InvalidInstance(where + ": " + e.what());
  }
}

std::string locate(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

}  // namespace

std::string instance_to_json(const AnyInstance& any) {
  json j;
  if (const auto* ot = std::get_if<OtInstance>(&any)) {
    j["kind"] = "ot";
    j["n"] = ot->n;
    j["mu"] = vector_json(ot->mu.values());
    j["nu"] = vector_json(ot->nu.values());
    j["cost"] = matrix_json(ot->cost.raw());
  } else if (const auto* uot = std::get_if<UnbalancedOtInstance>(&any)) {
    j["kind"] = "uot";
    j["n"] = uot->n;
    j["mu"] = vector_json(uot->mu.values());
    j["nu"] = vector_json(uot->nu);
    j["cost"] = matrix_json(uot->cost.raw());
  } else {
    const auto& wb = std::get<WbInstance>(any);
    j["kind"] = "wb";
    j["n"] = wb.n;
    j["m"] = wb.m;
    j["weights"] = vector_json(wb.weights);
    json marginals = json::array();
    for (const auto& h : wb.marginals) marginals.push_back(vector_json(h.values()));
    j["marginals"] = marginals;
    json costs = json::array();
    if (wb.shared_cost()) {
      costs.push_back(matrix_json(wb.cost(0).raw()));
    } else {
      for (Index l = 0; l < wb.m; ++l) costs.push_back(matrix_json(wb.cost(l).raw()));
    }
    j["costs"] = costs;
  }
  return j.dump();
}

AnyInstance instance_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("malformed JSON at " + locate(text, e.byte) + ": " + e.what());
  }
  const json& kind_j = field(j, "kind", "instance");
  if (!kind_j.is_string()) throw ParseError("field 'kind' must be a string");
  const auto kind = kind_j.get<std::string>();
  const json& n_j = field(j, "n", "instance");
  if (!n_j.is_number_integer() || n_j.get<long long>() < 1) {
    throw ParseError("field 'n' must be a positive integer");
  }
  const auto n = static_cast<Index>(n_j.get<long long>());

  if (kind == "ot") {
    auto mu = parse_histogram(field(j, "mu", "instance"), "mu", n);
    auto nu = parse_histogram(field(j, "nu", "instance"), "nu", n);
    return OtInstance::make(std::move(mu), std::move(nu),
                            parse_matrix(field(j, "cost", "instance"), "cost", n));
  }
  if (kind == "uot") {
    auto mu = parse_histogram(field(j, "mu", "instance"), "mu", n);
    Vector nu = parse_vector(field(j, "nu", "instance"), "nu", n);
    return UnbalancedOtInstance::make(std::move(mu), std::move(nu),
                                      parse_matrix(field(j, "cost", "instance"), "cost", n));
  }
  if (kind == "wb") {
    const json& m_j = field(j, "m", "instance");
    if (!m_j.is_number_integer() || m_j.get<long long>() < 1) {
      throw ParseError("field 'm' must be a positive integer");
    }
    const auto m = static_cast<Index>(m_j.get<long long>());
    Vector weights = parse_vector(field(j, "weights", "instance"), "weights", m);
    const json& marg_j = field(j, "marginals", "instance");
    if (!marg_j.is_array() || static_cast<Index>(marg_j.size()) != m) {
      throw ParseError("marginals: expected " + std::to_string(m) + " histograms");
    }
    std::vector<Histogram> marginals;
    for (Index l = 0; l < m; ++l) {
      marginals.push_back(parse_histogram(marg_j[static_cast<std::size_t>(l)],
                                          "marginals[" + std::to_string(l) + "]", n));
    }
    const json& costs_j = field(j, "costs", "instance");
    if (!costs_j.is_array() || (costs_j.size() != 1 && static_cast<Index>(costs_j.size()) != m)) {
      throw ParseError("costs: expected 1 shared matrix or " + std::to_string(m) + " matrices");
    }
    std::vector<Matrix> costs;
    for (std::size_t l = 0; l < costs_j.size(); ++l) {
      costs.push_back(parse_matrix(costs_j[l], "costs[" + std::to_string(l) + "]", n));
    }
    return WbInstance::make(std::move(weights), std::move(marginals), costs);
  }
  throw ParseError("unknown instance kind '" + kind + "' (expected ot, uot or wb)");
}

AnyInstance load_instance(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open instance file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return instance_from_json(buf.str());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  } catch (const InvalidInstance& e) {
    throw InvalidInstance(path.string() + ": " + e.what());
  }
}

void save_instance(const AnyInstance& inst, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write instance file " + path.string());
  out << instance_to_json(inst) << '\n';
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace otwb
