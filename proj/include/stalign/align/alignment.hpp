#pragma once

// Shared embedding space and the symmetric contrastive objective.
//
// Rows of the video and text matrices are paired by index (row i of each
// comes from the same study). With S = X Y^T / sigma,
//
//   l_v2t = -mean_i log softmax_j(S)[i][i]      (rows)
//   l_t2v = -mean_i log softmax_j(S^T)[i][i]    (columns)
//   total = l_v2t + l_t2v

#include <cstddef>
#include <vector>

#include "stalign/autodiff/parameters.hpp"
#include "stalign/nn/layers.hpp"

namespace stalign::align {

using ad::Tensor;

/// Separate linear map per tower followed by L2 normalization.
class Projection {
public:
    Projection() = default;
    Projection(ad::ParameterStore& store, const std::string& prefix, std::size_t in_dim, std::size_t out_dim,
               Rng& rng);
    /// Wraps explicit weights (tests, identity maps).
    Projection(Tensor weight, Tensor bias);

    /// raw [B, in] -> unit rows [B, out]. Rows whose projection is (near)
    /// zero are normalized with a 1e-12 floor and counted in degenerate_rows().
    Tensor operator()(const Tensor& raw) const;

    std::size_t in_dim() const { return layer_.weight.dim(0); }
    std::size_t out_dim() const { return layer_.weight.dim(1); }
    std::size_t degenerate_rows() const { return degenerate_rows_; }

private:
    nn::Linear layer_;
    mutable std::size_t degenerate_rows_ = 0;
};

struct LossBreakdown {
    double l_v2t = 0.0;
    double l_t2v = 0.0;
    double total = 0.0;
};

struct LossTerms {
    Tensor l_v2t;
    Tensor l_t2v;
    Tensor total;

    LossBreakdown values() const { return {l_v2t.item(), l_t2v.item(), total.item()}; }
};

/// Validated B x d_p pair of unit-row matrices plus temperature.
struct AlignmentBatch {
    Tensor video;  // x, [B, d_p]
    Tensor text;   // y, [B, d_p]
    Tensor sigma;  // one element, > 0

    /// Throws ContractError on B < 2, shape mismatch, non-unit rows (1e-5), or sigma <= 0.
    void validate() const;
    std::size_t batch_size() const { return video.dim(0); }
};

/// S[i][j] = x_i . y_j (no temperature).
Tensor similarity_matrix(const AlignmentBatch& batch);
LossTerms contrastive_loss(const AlignmentBatch& batch);

template <typename T>
struct BasicLossTerms {
    ad::BasicTensor<T> l_v2t, l_t2v, total;
};

/// Unvalidated loss graph for any scalar type; contrastive_loss() validates
/// and forwards here.
template <typename T>
BasicLossTerms<T> contrastive_loss_graph(const ad::BasicTensor<T>& x, const ad::BasicTensor<T>& y,
                                         const ad::BasicTensor<T>& sigma) {
    auto logits = ad::div_by_scalar(ad::matmul(x, ad::transpose(y)), sigma);
    BasicLossTerms<T> t;
    t.l_v2t = ad::scale(ad::mean(ad::diagonal(ad::log_softmax(logits, 1)), 0), -1.0);
    t.l_t2v = ad::scale(ad::mean(ad::diagonal(ad::log_softmax(logits, 0)), 0), -1.0);
    t.total = ad::add(t.l_v2t, t.l_t2v);
    return t;
}

}  // namespace stalign::align
