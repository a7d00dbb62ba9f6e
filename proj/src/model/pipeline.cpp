#include "stalign/model/pipeline.hpp"

#include <cmath>
#include <numeric>

#include "stalign/data/sampling.hpp"
#include "stalign/errors.hpp"

namespace stalign::model {

namespace {

std::vector<std::size_t> all_or(const data::Corpus& corpus, const std::vector<std::size_t>& indices) {
    if (!indices.empty()) return indices;
    std::vector<std::size_t> out(corpus.size());
    std::iota(out.begin(), out.end(), 0);
    return out;
}

void renormalize(std::vector<float>& v) {
    double s = 0.0;
    for (float x : v) s += double(x) * x;
    const double n = std::max(std::sqrt(s), 1e-12);
    for (float& x : v) x = static_cast<float>(x / n);
}

}  // namespace

PreparedCorpus prepare_corpus(const data::Corpus& corpus, const std::vector<std::size_t>& indices,
                              const data::ViewSpec& spec, const text::Vocabulary& vocab, std::size_t max_len,
                              const data::AssemblyOptions& opts) {
    PreparedCorpus out;
    for (std::size_t i : all_or(corpus, indices)) {
        if (i >= corpus.size()) throw ContractError("prepare_corpus: index out of range");
        const auto& m = corpus[i];
        PreparedStudy s;
        try {
            s.video = data::assemble_video(m, spec, opts);
        } catch (const ExclusionError& e) {
            out.excluded.push_back(e.what());
            continue;
        }
        s.study_id = m.study_id;
        s.text = text::tokenize(m.impression, vocab, max_len).trimmed();
        s.impression = m.impression;
        s.labels = m.labels;
        out.studies.push_back(std::move(s));
    }
    return out;
}

text::Vocabulary build_vocabulary(const data::Corpus& corpus, const std::vector<std::size_t>& indices,
                                  std::size_t min_count) {
    std::vector<std::string> texts;
    for (std::size_t i : all_or(corpus, indices)) texts.push_back(corpus.at(i).impression);
    return text::Vocabulary::build(texts, min_count);
}

eval::CorpusIndex embed_corpus(DualEncoder& model, const std::vector<PreparedStudy>& studies, std::size_t frames,
                               std::size_t stride) {
    if (studies.empty()) throw ContractError("embed_corpus: empty corpus");
    ad::NoGradGuard no_grad;
    model.reset_forward_counts();

    eval::CorpusIndex index;
    index.dim = model.config().proj_dim;
    std::size_t expected_video = 0;
    for (const auto& s : studies) {
        data::SamplingPlan plan{s.video.frames, frames, stride, data::SamplingMode::Inference};
        const auto offsets = data::inference_plan(plan);
        expected_video += offsets.size();

        std::vector<video::VideoTensor> clips;
        clips.reserve(offsets.size());
        for (const auto& idx : offsets) clips.push_back(s.video.select_frames(idx));
        std::vector<const video::VideoTensor*> ptrs;
        for (const auto& c : clips) ptrs.push_back(&c);
        const auto unit = model.project_video(model.encode_videos(ptrs));

        data::ClipEmbeddingSet set;
        const auto vals = unit.values();
        for (std::size_t k = 0; k < offsets.size(); ++k)
            set.add(std::vector<float>(vals.begin() + k * index.dim, vals.begin() + (k + 1) * index.dim));
        auto v = set.mean();
        renormalize(v);
        index.video_ids.push_back(s.study_id);
        index.video.insert(index.video.end(), v.begin(), v.end());

        const auto t = model.project_text(model.encode_texts({&s.text}));
        index.text_ids.push_back(s.study_id);
        index.text.insert(index.text.end(), t.values().begin(), t.values().end());
    }
    if (model.text_forwards() != studies.size() || model.video_forwards() != expected_video)
        throw ContractError("embed_corpus: encoder pass count " + std::to_string(model.text_forwards()) + "+" +
                            std::to_string(model.video_forwards()) + " differs from t+v*offsets = " +
                            std::to_string(studies.size()) + "+" + std::to_string(expected_video));
    return index;
}

}  // namespace stalign::model
