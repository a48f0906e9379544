#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "comac/embedding.hpp"
#include "comac/error.hpp"
#include "comac/matrix.hpp"
#include "comac/parallel.hpp"
#include "comac/saliency.hpp"

namespace comac {

using SimilarityMatrix = Matrix<double>;
using RelevanceVector = std::vector<double>;

/// Best document token for one query token.
struct MaxMatch {
  std::size_t index = 0;
  double value = 0.0;
  double runner_up_gap = 0.0;  // best minus second best; +inf with one doc token
};

namespace detail {

inline void check_pair(const Matrix<double>& x, const Matrix<double>& y) {
  if (x.empty() || y.empty()) throw EmptyEntry("similarity on an empty token matrix");
  if (x.cols() != y.cols())
    throw ShapeError("token widths differ: " + std::to_string(x.cols()) + " vs " +
                     std::to_string(y.cols()));
}

}  // namespace detail

/// For every row of x, the maximum dot product against the rows of y.
/// Ties go to the lowest y index.
inline std::vector<MaxMatch> max_matches(const Matrix<double>& x, const Matrix<double>& y) {
  detail::check_pair(x, y);
  std::vector<MaxMatch> out(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto xi = x.row(i);
    MaxMatch best{0, dot(xi, y.row(0)), std::numeric_limits<double>::infinity()};
    for (std::size_t j = 1; j < y.rows(); ++j) {
      const double s = dot(xi, y.row(j));
      if (s > best.value) {
        best.runner_up_gap = s - best.value;
        best.index = j;
        best.value = s;
      } else {
        best.runner_up_gap = std::min(best.runner_up_gap, best.value - s);
      }
    }
    out[i] = best;
  }
  return out;
}

/// Sum over x tokens of the best dot product against y.
inline double colbert(const Matrix<double>& x, const Matrix<double>& y) {
  double total = 0.0;
  for (const auto& m : max_matches(x, y)) total += m.value;
  return total;
}

/// colbert(x, y) / |x|
inline double normalized(const Matrix<double>& x, const Matrix<double>& y) {
  return colbert(x, y) / static_cast<double>(x.rows());
}

/// normalized(x, y) + normalized(y, x)
inline double symmetric(const Matrix<double>& x, const Matrix<double>& y) {
  return normalized(x, y) + normalized(y, x);
}

inline double colbert(const ReducedMatrix& x, const ReducedMatrix& y) { return colbert(x.rows, y.rows); }
inline double normalized(const ReducedMatrix& x, const ReducedMatrix& y) { return normalized(x.rows, y.rows); }
inline double symmetric(const ReducedMatrix& x, const ReducedMatrix& y) { return symmetric(x.rows, y.rows); }

inline Matrix<double> apply_mask(const Matrix<double>& m, const SelectionMask& mask) {
  if (mask.kept.empty()) throw EmptyEntry("empty selection mask");
  for (auto p : mask.kept)
    if (p >= m.rows())
      throw ShapeError("mask position " + std::to_string(p) + " out of range for " +
                       std::to_string(m.rows()) + " tokens");
  return m.gather(mask.kept);
}

/// Symmetric normalized similarity on the selected token subsets.
inline double ssn(const ReducedMatrix& x, const ReducedMatrix& y, const SelectionMask& mask_x,
                  const SelectionMask& mask_y) {
  return symmetric(apply_mask(x.rows, mask_x), apply_mask(y.rows, mask_y));
}

enum class Similarity { colbert, normalized, symmetric };

inline double similarity(Similarity metric, const Matrix<double>& x, const Matrix<double>& y) {
  switch (metric) {
    case Similarity::colbert: return colbert(x, y);
    case Similarity::normalized: return normalized(x, y);
    case Similarity::symmetric: return symmetric(x, y);
  }
  return 0.0;
}

/// Cell (i, j) = metric(queries[i], docs[j]) on the masked rows. Empty mask
/// lists mean "all tokens". With Similarity::symmetric and masks this is
/// the sparse symmetric normalized similarity.
inline SimilarityMatrix sim_matrix(std::span<const ReducedMatrix> queries,
                                   std::span<const ReducedMatrix> docs,
                                   std::span<const SelectionMask> query_masks,
                                   std::span<const SelectionMask> doc_masks,
                                   Similarity metric = Similarity::symmetric) {
  if (!query_masks.empty() && query_masks.size() != queries.size())
    throw ShapeError("query mask count does not match query count");
  if (!doc_masks.empty() && doc_masks.size() != docs.size())
    throw ShapeError("document mask count does not match document count");
  const std::size_t width = queries.empty() ? 0 : queries.front().dim();
  for (const auto& q : queries)
    if (q.dim() != width) throw ShapeError("mixed reduced widths among queries");
  for (const auto& d : docs)
    if (d.dim() != width) throw ShapeError("document width differs from query width");

  auto prepare = [](std::span<const ReducedMatrix> ms, std::span<const SelectionMask> masks) {
    std::vector<Matrix<double>> out;
    out.reserve(ms.size());
    for (std::size_t i = 0; i < ms.size(); ++i)
      out.push_back(masks.empty() ? ms[i].rows : apply_mask(ms[i].rows, masks[i]));
    return out;
  };
  const auto q = prepare(queries, query_masks);
  const auto d = prepare(docs, doc_masks);

  SimilarityMatrix out(q.size(), d.size());
  parallel_for(q.size() * d.size(), [&](std::size_t cell) {
    const std::size_t i = cell / d.size(), j = cell % d.size();
    out(i, j) = similarity(metric, q[i], d[j]);
  });
  return out;
}

inline SimilarityMatrix sim_matrix(std::span<const ReducedMatrix> queries,
                                   std::span<const ReducedMatrix> docs,
                                   Similarity metric = Similarity::symmetric) {
  return sim_matrix(queries, docs, {}, {}, metric);
}

/// Row means: relevance of each query against the whole document set.
inline RelevanceVector mean_over_docs(const SimilarityMatrix& m) {
  if (m.cols() == 0) throw ShapeError("similarity matrix has no columns");
  RelevanceVector out(m.rows(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double sum = 0.0;
    for (double v : m.row(i)) sum += v;
    out[i] = sum / static_cast<double>(m.cols());
  }
  return out;
}

}  // namespace comac
