#include "mmcaps/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <thread>

#include "mmcaps/errors.hpp"

namespace mmcaps {

double RetrievalReport::r_at(std::size_t k) const {
    if (ranks.empty()) return 0.0;
    std::size_t hits = 0;
    for (std::size_t r : ranks)
        if (r <= k) ++hits;
    return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

RetrievalReport retrieval_metrics(const Tensor& queries, const Tensor& gallery,
                                  RankMetric metric) {
    if (queries.cols() != gallery.cols() || queries.rows() != gallery.rows())
        throw ShapeError("retrieval_metrics: queries " + queries.shape_str() + " vs gallery " +
                         gallery.shape_str());
    if (queries.rows() == 0) throw ShapeError("retrieval_metrics: empty inputs");
    std::size_t n = queries.rows(), d = queries.cols();
    RetrievalReport rep;
    rep.ranks.resize(n);
    std::vector<double> d2(n);
    for (std::size_t q = 0; q < n; ++q) {
        for (std::size_t g = 0; g < n; ++g) {
            double acc = 0.0;
            if (metric == RankMetric::euclidean) {
                for (std::size_t j = 0; j < d; ++j) {
                    double diff = queries(q, j) - gallery(g, j);
                    acc += diff * diff;
                }
            } else {
                // negated dot product so that smaller is always better
                for (std::size_t j = 0; j < d; ++j) acc -= queries(q, j) * gallery(g, j);
            }
            d2[g] = acc;
        }
        std::size_t rank = 1;
        for (std::size_t g = 0; g < n; ++g)
            if (d2[g] < d2[q] || (d2[g] == d2[q] && g < q)) ++rank;
        rep.ranks[q] = rank;
    }
    std::vector<std::size_t> sorted = rep.ranks;
    std::sort(sorted.begin(), sorted.end());
    if (n % 2 == 1)
        rep.med_r = static_cast<double>(sorted[n / 2]);
    else
        rep.med_r = 0.5 * (static_cast<double>(sorted[n / 2 - 1]) +
                           static_cast<double>(sorted[n / 2]));
    return rep;
}

Tensor fuse_video_audio(const Tensor& emb_video, const Tensor& emb_audio) {
    check_same_shape(emb_video, emb_audio, "fuse_video_audio");
    Tensor out(emb_video.rows(), emb_video.cols());
    for (std::size_t i = 0; i < out.size(); ++i)
        out.at(i) = 0.5 * (emb_video.at(i) + emb_audio.at(i));
    return out;
}

std::vector<std::size_t> localize(const Tensor& clip_embs, const Tensor& action_embs) {
    if (clip_embs.cols() != action_embs.cols())
        throw ShapeError("localize: clips " + clip_embs.shape_str() + " vs actions " +
                         action_embs.shape_str());
    if (action_embs.rows() == 0) throw ShapeError("localize: no action embeddings");
    std::vector<std::size_t> out(clip_embs.rows());
    for (std::size_t t = 0; t < clip_embs.rows(); ++t) {
        std::size_t best = 0;
        double best_d = 0.0;
        for (std::size_t a = 0; a < action_embs.rows(); ++a) {
            double acc = 0.0;
            for (std::size_t j = 0; j < clip_embs.cols(); ++j) {
                double diff = clip_embs(t, j) - action_embs(a, j);
                acc += diff * diff;
            }
            if (a == 0 || acc < best_d) {
                best = a;
                best_d = acc;
            }
        }
        out[t] = best;
    }
    return out;
}

namespace {

void check_segments(const std::vector<Segment>& segs, std::size_t t_len, const char* who) {
    for (const Segment& s : segs) {
        if (s.start >= s.end)
            throw ShapeError(std::string(who) + ": empty segment [" + std::to_string(s.start) +
                             "," + std::to_string(s.end) + ")");
        if (s.end > t_len)
            throw ShapeError(std::string(who) + ": segment end " + std::to_string(s.end) +
                             " past length " + std::to_string(t_len));
    }
}

}  // namespace

SegmentationScore iod_iou(const std::vector<Segment>& gt, const std::vector<Segment>& pred,
                          std::size_t t_len) {
    check_segments(gt, t_len, "iod_iou gt");
    check_segments(pred, t_len, "iod_iou pred");
    std::set<std::uint32_t> labels;
    for (const Segment& s : gt) labels.insert(s.label);
    for (const Segment& s : pred) labels.insert(s.label);

    SegmentationScore score;
    std::size_t gt_labels = 0;
    std::vector<char> g(t_len), d(t_len);
    for (std::uint32_t lab : labels) {
        std::fill(g.begin(), g.end(), 0);
        std::fill(d.begin(), d.end(), 0);
        bool in_gt = false;
        for (const Segment& s : gt)
            if (s.label == lab) {
                in_gt = true;
                for (std::size_t t = s.start; t < s.end; ++t) g[t] = 1;
            }
        for (const Segment& s : pred)
            if (s.label == lab)
                for (std::size_t t = s.start; t < s.end; ++t) d[t] = 1;
        std::size_t ng = 0, nd = 0, ni = 0, nu = 0;
        for (std::size_t t = 0; t < t_len; ++t) {
            ng += g[t];
            nd += d[t];
            ni += g[t] && d[t];
            nu += g[t] || d[t];
        }
        LabelOverlap o;
        o.iod = nd == 0 ? 0.0 : static_cast<double>(ni) / static_cast<double>(nd);
        o.iou = nu == 0 ? 1.0 : static_cast<double>(ni) / static_cast<double>(nu);
        score.per_label[lab] = o;
        if (in_gt) {
            score.iod += o.iod;
            score.iou += o.iou;
            ++gt_labels;
        }
    }
    if (gt_labels > 0) {
        score.iod /= static_cast<double>(gt_labels);
        score.iou /= static_cast<double>(gt_labels);
    }
    return score;
}

double localization_recall(const std::vector<Segment>& gt,
                           const std::vector<std::uint32_t>& pred_labels) {
    check_segments(gt, pred_labels.size(), "localization_recall gt");
    if (gt.empty()) return 0.0;
    std::size_t hit = 0;
    for (const Segment& s : gt)
        for (std::size_t t = s.start; t < s.end; ++t)
            if (pred_labels[t] == s.label) {
                ++hit;
                break;
            }
    return static_cast<double>(hit) / static_cast<double>(gt.size());
}

std::vector<std::size_t> top_activating(const Tensor& activations, std::size_t capsule,
                                        std::size_t k) {
    if (capsule >= activations.cols())
        throw std::out_of_range("top_activating: capsule " + std::to_string(capsule) + " of " +
                                std::to_string(activations.cols()));
    if (k > activations.rows())
        throw std::out_of_range("top_activating: k " + std::to_string(k) + " of " +
                                std::to_string(activations.rows()) + " samples");
    std::vector<std::size_t> idx(activations.rows());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return activations(a, capsule) > activations(b, capsule);
    });
    idx.resize(k);
    return idx;
}

Tensor embed_all(CapsuleModel& model, const Tensor& feats, Modality m, std::size_t threads) {
    std::size_t n = feats.rows();
    Tensor out(n, model.config().embed_dim);
    if (threads < 1) threads = 1;
    threads = std::min(threads, n == 0 ? std::size_t(1) : n);
    auto work = [&](std::size_t t_id) {
        for (std::size_t i = t_id; i < n; i += threads) {
            std::vector<double> row(feats.row(i), feats.row(i) + feats.cols());
            Tensor e = model.embed(row, m);
            for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) = e(0, j);
        }
    };
    if (threads == 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (std::size_t t_id = 0; t_id < threads; ++t_id) pool.emplace_back(work, t_id);
        for (auto& th : pool) th.join();
    }
    return out;
}

}  // namespace mmcaps
