#include "stalign/model/trainer.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "json.hpp"
#include "stalign/autodiff/adam.hpp"
#include "stalign/autodiff/checkpoint.hpp"
#include "stalign/data/corpus_io.hpp"
#include "stalign/data/sampling.hpp"
#include "stalign/errors.hpp"

namespace stalign::model {

using nlohmann::json;

std::string to_json_line(const StepRecord& r) {
    json j{{"step", r.step}, {"l_v2t", r.loss.l_v2t}, {"l_t2v", r.loss.l_t2v}, {"total", r.loss.total},
           {"sigma", r.sigma}};
    return j.dump();
}

std::string to_json_line(const EpochRecord& r) {
    json j{{"epoch", r.epoch},           {"step", r.step},   {"l_v2t", r.loss.l_v2t},
           {"l_t2v", r.loss.l_t2v},      {"total", r.loss.total}, {"sigma", r.sigma},
           {"val_rsum", r.val_rsum ? json(*r.val_rsum) : json(nullptr)}};
    return j.dump();
}

std::unique_ptr<DualEncoder> initial_model(const RunConfig& cfg, std::size_t vocab_size) {
    return std::make_unique<DualEncoder>(cfg.model, vocab_size, cfg.seed);
}

namespace {

std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream f(p, std::ios::trunc);
    if (!f) throw IoError("cannot write " + p.string());
    return f;
}

}  // namespace

TrainResult train(const RunConfig& cfg, const data::Corpus& corpus, const TrainOptions& opts) {
    cfg.validate();
    if (corpus.empty()) throw DataError("train: empty corpus");
    const auto spec = data::ViewSpec::parse(cfg.view_spec);
    const data::AssemblyOptions assembly{cfg.model.video.height, cfg.model.video.width};

    TrainResult res;
    const auto split = data::split_by_hash(corpus, cfg.train_fraction);
    res.train_indices = split.train;
    res.val_indices = split.test;
    if (res.train_indices.empty()) throw DataError("train: split left no training studies");
    res.vocab = build_vocabulary(corpus, res.train_indices, cfg.vocab_min_count);

    auto train_set = prepare_corpus(corpus, res.train_indices, spec, res.vocab, cfg.model.text.max_len, assembly);
    std::vector<PreparedStudy> val_studies;
    if (!res.val_indices.empty()) {
        auto v = prepare_corpus(corpus, res.val_indices, spec, res.vocab, cfg.model.text.max_len, assembly);
        val_studies = std::move(v.studies);
        res.excluded = std::move(v.excluded);
    }
    res.excluded.insert(res.excluded.begin(), train_set.excluded.begin(), train_set.excluded.end());
    if (opts.log)
        for (const auto& e : res.excluded) *opts.log << "excluded: " << e << '\n';
    const auto& studies = train_set.studies;
    if (studies.empty()) throw DataError("train: every training study was excluded");
    if (studies.size() < 2) throw DataError("train: need at least two training studies for a contrastive batch");

    res.model = initial_model(cfg, res.vocab.size());
    DualEncoder& model = *res.model;

    std::ofstream steps_log, metrics_log;
    if (opts.out_dir) {
        std::filesystem::create_directories(*opts.out_dir);
        cfg.save(*opts.out_dir / "config.txt");
        res.vocab.save(*opts.out_dir / "vocab.txt");
        steps_log = open_out(*opts.out_dir / "steps.jsonl");
        metrics_log = open_out(*opts.out_dir / "metrics.jsonl");
    }

    ad::AdamState adam;
    adam.lr = cfg.lr;
    adam.beta1 = cfg.beta1;
    adam.beta2 = cfg.beta2;
    adam.eps = cfg.adam_eps;
    auto& params = model.parameters().tensors();

    std::vector<std::size_t> order(studies.size());
    std::size_t step = 0;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng shuffle(mix_seed(cfg.seed, "shuffle/" + std::to_string(epoch)));
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

        EpochRecord rec;
        rec.epoch = epoch;
        std::size_t epoch_steps = 0;
        for (std::size_t b = 0; b + 1 < order.size(); b += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), b + cfg.batch_size);
            std::vector<video::VideoTensor> clips;
            std::vector<const text::TokenizedText*> texts;
            std::set<std::string> seen_text;
            bool duplicate = false;
            for (std::size_t k = b; k < end; ++k) {
                const auto& s = studies[order[k]];
                data::SamplingPlan plan{s.video.frames, cfg.frames, cfg.stride, data::SamplingMode::Train};
                const auto idx =
                    data::tsn_sample(plan, mix_seed(cfg.seed, "clip/" + std::to_string(epoch) + "/" + s.study_id));
                clips.push_back(s.video.select_frames(idx));
                texts.push_back(&s.text);
                duplicate |= !seen_text.insert(s.impression).second;
            }
            if (duplicate) {
                ++res.duplicate_text_batches;
                if (opts.log) *opts.log << "warning: identical impressions share batch at step " << step + 1 << '\n';
            }
            std::vector<const video::VideoTensor*> ptrs;
            for (const auto& c : clips) ptrs.push_back(&c);

            align::AlignmentBatch batch{model.project_video(model.encode_videos(ptrs)),
                                        model.project_text(model.encode_texts(texts)), model.sigma()};
            auto loss = align::contrastive_loss(batch);
            loss.total.backward();
            ad::adam_step<float>(params, adam);
            model.parameters().zero_grad();
            model.clamp_sigma();

            StepRecord sr{++step, loss.values(), double(model.sigma().at(0))};
            res.steps.push_back(sr);
            if (steps_log.is_open()) steps_log << to_json_line(sr) << '\n';
            rec.loss.l_v2t += sr.loss.l_v2t;
            rec.loss.l_t2v += sr.loss.l_t2v;
            rec.loss.total += sr.loss.total;
            ++epoch_steps;
        }
        rec.step = step;
        rec.loss.l_v2t /= double(epoch_steps);
        rec.loss.l_t2v /= double(epoch_steps);
        rec.loss.total /= double(epoch_steps);
        rec.sigma = model.sigma().at(0);

        const bool validate_now =
            !val_studies.empty() && cfg.val_every > 0 && (epoch % cfg.val_every == 0 || epoch == cfg.epochs);
        if (validate_now) {
            const auto index = embed_corpus(model, val_studies, cfg.frames, cfg.stride);
            rec.val_rsum = eval::rsum_percent(eval::evaluate_retrieval(index));
            if (!res.best_val_rsum || *rec.val_rsum > *res.best_val_rsum) {
                res.best_val_rsum = rec.val_rsum;
                res.best_epoch = epoch;
                if (opts.out_dir) ad::save_checkpoint(model.parameters(), *opts.out_dir / "best.ckpt");
            }
        }
        res.epochs.push_back(rec);
        const auto line = to_json_line(rec);
        if (metrics_log.is_open()) metrics_log << line << '\n';
        if (opts.log) *opts.log << line << '\n';
    }
    if (opts.out_dir) ad::save_checkpoint(model.parameters(), *opts.out_dir / "final.ckpt");
    return res;
}

}  // namespace stalign::model
