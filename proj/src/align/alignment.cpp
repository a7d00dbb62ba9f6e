#include "stalign/align/alignment.hpp"

#include <cmath>
#include <iostream>

#include "stalign/errors.hpp"

namespace stalign::align {

Projection::Projection(ad::ParameterStore& store, const std::string& prefix, std::size_t in_dim,
                       std::size_t out_dim, Rng& rng)
    : layer_(nn::Linear::create(store, prefix, in_dim, out_dim, rng)) {}

Projection::Projection(Tensor weight, Tensor bias) {
    layer_.weight = std::move(weight);
    layer_.bias = std::move(bias);
}

Tensor Projection::operator()(const Tensor& raw) const {
    auto projected = layer_(raw);
    const std::size_t rows = projected.dim(0), cols = projected.dim(1);
    const auto v = projected.values();
    for (std::size_t i = 0; i < rows; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < cols; ++j) s += static_cast<double>(v[i * cols + j]) * v[i * cols + j];
        if (std::sqrt(s) < 1e-12) {
            ++degenerate_rows_;
            std::cerr << "warning: projection produced a zero vector; normalizing with eps\n";
        }
    }
    return ad::l2_normalize_rows(projected, 1e-12);
}

void AlignmentBatch::validate() const {
    if (!video.defined() || !text.defined() || !sigma.defined()) throw ContractError("alignment batch: missing tensor");
    if (video.rank() != 2 || video.shape() != text.shape()) {
        throw ContractError("alignment batch: video " + ad::shape_str(video.shape()) + " and text " +
                            ad::shape_str(text.shape()) + " must be matching [B, d] matrices");
    }
    if (video.dim(0) < 2) throw ContractError("alignment batch: B must be at least 2");
    if (sigma.numel() != 1 || !(sigma.values()[0] > 0.0F)) {
        throw ContractError("alignment batch: temperature must be a positive scalar");
    }
    const std::size_t b = video.dim(0), d = video.dim(1);
    for (const Tensor* m : {&video, &text}) {
        const auto v = m->values();
        for (std::size_t i = 0; i < b; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j) s += static_cast<double>(v[i * d + j]) * v[i * d + j];
            if (std::abs(std::sqrt(s) - 1.0) > 1e-5) {
                throw ContractError("alignment batch: row " + std::to_string(i) + " has norm " +
                                    std::to_string(std::sqrt(s)));
            }
        }
    }
}

Tensor similarity_matrix(const AlignmentBatch& batch) {
    batch.validate();
    return ad::matmul(batch.video, ad::transpose(batch.text));
}

LossTerms contrastive_loss(const AlignmentBatch& batch) {
    batch.validate();
    auto g = contrastive_loss_graph(batch.video, batch.text, batch.sigma);
    return {g.l_v2t, g.l_t2v, g.total};
}

}  // namespace stalign::align
