#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "splr/bases.hpp"

namespace splr {

/// prod_k w^(k)(y_k): one coefficient vector per dimension.
struct rank_one_term {
  std::vector<vector> factors;

  index_t dimension() const { return static_cast<index_t>(factors.size()); }
};

/// u_m = sum_i alpha_i w_i over a tensor basis. Terms are kept in normalized
/// form (unit Euclidean norm per factor, largest-magnitude entry positive).
struct canonical_model {
  tensor_basis basis;
  std::vector<rank_one_term> terms;
  vector alphas;

  canonical_model() : alphas(0) {}
  explicit canonical_model(tensor_basis b) : basis(std::move(b)), alphas(0) {}

  std::size_t rank() const { return terms.size(); }

  std::size_t effective_rank() const {
    std::size_t n = 0;
    for (index_t i = 0; i < alphas.size(); ++i) n += alphas[i] != 0.0;
    return n;
  }

  void check() const {
    if (static_cast<index_t>(terms.size()) != alphas.size())
      throw invalid_argument("canonical_model: term and alpha counts differ");
    for (const auto& t : terms) {
      if (t.dimension() != basis.dimension()) throw invalid_argument("canonical_model: term dimension mismatch");
      for (index_t k = 0; k < t.dimension(); ++k)
        if (t.factors[static_cast<std::size_t>(k)].size() != basis[k].size())
          throw invalid_argument("canonical_model: factor length mismatch");
    }
  }
};

/// Normalizes every factor of `term` in place and returns the product of the
/// removed norms (signed so that the largest-magnitude entry of each factor is
/// positive; the first such entry wins ties). Returns 0 for a zero factor.
inline double normalize_term(rank_one_term& term) {
  double scale = 1.0;
  for (auto& f : term.factors) {
    const double n = f.norm();
    if (!(n > 0.0)) return 0.0;
    index_t arg = 0;
    f.cwiseAbs().maxCoeff(&arg);
    const double s = f[arg] < 0.0 ? -n : n;
    f /= s;
    scale *= s;
  }
  return scale;
}

/// Values of a rank-one term at every sample, from precomputed basis evaluations.
inline vector term_values(const std::vector<matrix>& basis_values, const rank_one_term& term) {
  vector out = basis_values[0] * term.factors[0];
  for (std::size_t k = 1; k < term.factors.size(); ++k) out.array() *= (basis_values[k] * term.factors[k]).array();
  return out;
}

/// Per-dimension basis evaluation matrices (Q x n_k) at the sample points.
inline std::vector<matrix> basis_values(const tensor_basis& basis, const matrix& points) {
  if (points.cols() != basis.dimension()) throw invalid_argument("sample dimension does not match basis");
  std::vector<matrix> out;
  out.reserve(static_cast<std::size_t>(basis.dimension()));
  for (index_t k = 0; k < basis.dimension(); ++k) out.push_back(basis[k].eval_many(points.col(k)));
  return out;
}

inline double evaluate(const canonical_model& model, const Eigen::Ref<const vector>& y) {
  if (y.size() != model.basis.dimension()) throw invalid_argument("evaluate: point dimension mismatch");
  std::vector<vector> phi;
  phi.reserve(static_cast<std::size_t>(y.size()));
  for (index_t k = 0; k < y.size(); ++k) phi.push_back(model.basis[k].eval(y[k]));
  double sum = 0.0;
  for (std::size_t i = 0; i < model.terms.size(); ++i) {
    double prod = model.alphas[static_cast<index_t>(i)];
    for (std::size_t k = 0; k < phi.size(); ++k) prod *= phi[k].dot(model.terms[i].factors[k]);
    sum += prod;
  }
  return sum;
}

inline vector evaluate_batch(const canonical_model& model, const matrix& points) {
  vector out = vector::Zero(points.rows());
  if (model.terms.empty()) {
    if (points.cols() != model.basis.dimension()) throw invalid_argument("evaluate_batch: dimension mismatch");
    // still validate the domain
    for (index_t k = 0; k < points.cols(); ++k)
      for (index_t q = 0; q < points.rows(); ++q) model.basis[k].locate(points(q, k));
    return out;
  }
  const auto values = basis_values(model.basis, points);
  for (std::size_t i = 0; i < model.terms.size(); ++i)
    out += model.alphas[static_cast<index_t>(i)] * term_values(values, model.terms[i]);
  return out;
}

inline vector evaluate_batch(const canonical_model& model, const sample_set& points) {
  return evaluate_batch(model, points.points);
}

struct sparsity {
  double total = 0.0;
  std::vector<double> per_dimension;
};

/// Fractions of exactly-nonzero factor coefficients: overall and per dimension.
inline sparsity sparsity_ratios(const canonical_model& model) {
  if (model.terms.empty()) throw empty_model("sparsity_ratios: model has no terms");
  const index_t d = model.basis.dimension();
  const auto m = static_cast<double>(model.terms.size());
  sparsity out;
  out.per_dimension.assign(static_cast<std::size_t>(d), 0.0);
  double nonzero = 0.0;
  for (index_t k = 0; k < d; ++k) {
    double nz = 0.0;
    for (const auto& t : model.terms) nz += static_cast<double>((t.factors[static_cast<std::size_t>(k)].array() != 0.0).count());
    out.per_dimension[static_cast<std::size_t>(k)] = nz / (m * static_cast<double>(model.basis[k].size()));
    nonzero += nz;
  }
  out.total = nonzero / (m * static_cast<double>(model.basis.factor_size_sum()));
  return out;
}

/// Sparsity ratio of a single term (the rank-one ratio).
inline double term_sparsity(const rank_one_term& term) {
  double nz = 0.0, all = 0.0;
  for (const auto& f : term.factors) {
    nz += static_cast<double>((f.array() != 0.0).count());
    all += static_cast<double>(f.size());
  }
  return all > 0.0 ? nz / all : 0.0;
}

// ---------------------------------------------------------------------------
// model document

inline constexpr const char* model_format_tag = "splr-canonical-model";
inline constexpr int model_format_version = 1;

inline nlohmann::json basis_to_json(const univariate_basis& b) {
  nlohmann::json j;
  j["kind"] = to_string(b.kind());
  j["degree"] = b.degree();
  if (b.kind() == basis_kind::piecewise_legendre) j["pieces"] = b.pieces();
  if (b.kind() == basis_kind::multiwavelet) j["levels"] = b.levels();
  j["lower"] = b.domain().lower;
  j["upper"] = b.domain().upper;
  return j;
}

namespace detail {

inline const nlohmann::json& field(const nlohmann::json& j, const std::string& key, const std::string& where) {
  if (!j.is_object()) throw malformed_document(where + ": expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw malformed_document(where + "/" + key + ": missing field");
  return *it;
}

inline double number_field(const nlohmann::json& j, const std::string& key, const std::string& where) {
  const auto& v = field(j, key, where);
  if (!v.is_number()) throw malformed_document(where + "/" + key + ": expected a number");
  return v.get<double>();
}

inline long long integer_field(const nlohmann::json& j, const std::string& key, const std::string& where) {
  const auto& v = field(j, key, where);
  if (!v.is_number_integer()) throw malformed_document(where + "/" + key + ": expected an integer");
  return v.get<long long>();
}

} // namespace detail

/// Parses a basis descriptor; errors carry the JSON path in `where`.
inline univariate_basis basis_from_json(const nlohmann::json& j, const std::string& where) {
  const auto& kind_field = detail::field(j, "kind", where);
  if (!kind_field.is_string()) throw malformed_document(where + "/kind: expected a string");
  const std::string kind = kind_field.get<std::string>();
  const int degree = static_cast<int>(detail::integer_field(j, "degree", where));
  const double lower = j.contains("lower") ? detail::number_field(j, "lower", where) : 0.0;
  const double upper = j.contains("upper") ? detail::number_field(j, "upper", where) : 1.0;
  try {
    const interval dom(lower, upper);
    if (kind == "legendre") return univariate_basis::legendre(degree, dom);
    if (kind == "piecewise_legendre")
      return univariate_basis::piecewise_legendre(degree, static_cast<int>(detail::integer_field(j, "pieces", where)), dom);
    if (kind == "multiwavelet")
      return univariate_basis::multiwavelet(degree, static_cast<int>(detail::integer_field(j, "levels", where)), dom);
  } catch (const invalid_argument& e) {
    throw malformed_document(where + ": " + e.what());
  }
  throw malformed_document(where + "/kind: unknown basis kind '" + kind + "'");
}

inline nlohmann::json to_json(const canonical_model& model) {
  model.check();
  nlohmann::json doc;
  doc["format"] = model_format_tag;
  doc["version"] = model_format_version;
  doc["basis"] = nlohmann::json::array();
  for (const auto& b : model.basis.factors()) doc["basis"].push_back(basis_to_json(b));
  doc["terms"] = nlohmann::json::array();
  for (std::size_t i = 0; i < model.terms.size(); ++i) {
    nlohmann::json t;
    t["alpha"] = model.alphas[static_cast<index_t>(i)];
    t["factors"] = nlohmann::json::array();
    for (const auto& f : model.terms[i].factors) {
      nlohmann::json jf;
      jf["size"] = f.size();
      jf["indices"] = nlohmann::json::array();
      jf["values"] = nlohmann::json::array();
      for (index_t r = 0; r < f.size(); ++r)
        if (f[r] != 0.0) {
          jf["indices"].push_back(r);
          jf["values"].push_back(f[r]);
        }
      t["factors"].push_back(std::move(jf));
    }
    doc["terms"].push_back(std::move(t));
  }
  return doc;
}

/// Text form of the model document. Doubles are written in shortest
/// round-trip form, so reading it back reproduces every bit.
inline std::string serialize(const canonical_model& model) { return to_json(model).dump(1) + "\n"; }

inline canonical_model from_json(const nlohmann::json& doc) {
  const auto& tag = detail::field(doc, "format", "");
  if (!tag.is_string() || tag.get<std::string>() != model_format_tag)
    throw malformed_document("/format: expected '" + std::string(model_format_tag) + "'");
  if (detail::integer_field(doc, "version", "") != model_format_version)
    throw malformed_document("/version: unsupported version");
  const auto& jb = detail::field(doc, "basis", "");
  if (!jb.is_array() || jb.empty()) throw malformed_document("/basis: expected a non-empty array");
  std::vector<univariate_basis> factors;
  for (std::size_t k = 0; k < jb.size(); ++k) factors.push_back(basis_from_json(jb[k], "/basis/" + std::to_string(k)));
  canonical_model model{tensor_basis(std::move(factors))};
  const auto& jt = detail::field(doc, "terms", "");
  if (!jt.is_array()) throw malformed_document("/terms: expected an array");
  model.alphas.resize(static_cast<index_t>(jt.size()));
  for (std::size_t i = 0; i < jt.size(); ++i) {
    const std::string where = "/terms/" + std::to_string(i);
    model.alphas[static_cast<index_t>(i)] = detail::number_field(jt[i], "alpha", where);
    const auto& jf = detail::field(jt[i], "factors", where);
    if (!jf.is_array() || static_cast<index_t>(jf.size()) != model.basis.dimension())
      throw malformed_document(where + "/factors: expected one factor per dimension");
    rank_one_term term;
    for (std::size_t k = 0; k < jf.size(); ++k) {
      const std::string fw = where + "/factors/" + std::to_string(k);
      const auto n = detail::integer_field(jf[k], "size", fw);
      if (n != model.basis[static_cast<index_t>(k)].size()) throw malformed_document(fw + "/size: does not match basis");
      const auto& idx = detail::field(jf[k], "indices", fw);
      const auto& val = detail::field(jf[k], "values", fw);
      if (!idx.is_array() || !val.is_array() || idx.size() != val.size())
        throw malformed_document(fw + ": indices and values must be arrays of equal length");
      vector f = vector::Zero(static_cast<index_t>(n));
      for (std::size_t e = 0; e < idx.size(); ++e) {
        if (!idx[e].is_number_integer() || !val[e].is_number())
          throw malformed_document(fw + "/indices/" + std::to_string(e) + ": bad entry");
        const auto r = idx[e].get<long long>();
        if (r < 0 || r >= n) throw malformed_document(fw + "/indices/" + std::to_string(e) + ": out of range");
        f[static_cast<index_t>(r)] = val[e].get<double>();
      }
      term.factors.push_back(std::move(f));
    }
    model.terms.push_back(std::move(term));
  }
  return model;
}

inline canonical_model deserialize(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw malformed_document(std::string("model document: ") + e.what());
  }
  return from_json(doc);
}

} // namespace splr
