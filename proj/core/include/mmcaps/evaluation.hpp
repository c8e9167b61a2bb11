#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "mmcaps/model.hpp"
#include "mmcaps/tensor.hpp"

namespace mmcaps {

struct RetrievalReport {
    std::vector<std::size_t> ranks;  // 1-based rank of the true item per query
    double med_r = 0.0;

    double r_at(std::size_t k) const;
};

// Which similarity orders the gallery: euclidean distance ascending, or
// dot product descending.
enum class RankMetric { euclidean, dot };

// Ranks the aligned gallery item for every query row; ties broken by
// gallery index.
RetrievalReport retrieval_metrics(const Tensor& queries, const Tensor& gallery,
                                  RankMetric metric = RankMetric::euclidean);

// Element-wise mean of the two embeddings.
Tensor fuse_video_audio(const Tensor& emb_video, const Tensor& emb_audio);

// Per time-step index of the nearest action embedding; ties take the
// lowest action index.
std::vector<std::size_t> localize(const Tensor& clip_embs, const Tensor& action_embs);

// Half-open frame interval [start, end) carrying one action label.
struct Segment {
    std::size_t start = 0, end = 0;
    std::uint32_t label = 0;
};

struct LabelOverlap {
    double iod = 0.0, iou = 0.0;
};

struct SegmentationScore {
    double iod = 0.0, iou = 0.0;  // macro averages over labels present in gt
    std::map<std::uint32_t, LabelOverlap> per_label;
};

// Frame-set overlap per label: IoD = |G∩D|/|D| (0 when |D|=0),
// IoU = |G∩D|/|G∪D| (1 when both empty).
SegmentationScore iod_iou(const std::vector<Segment>& gt, const std::vector<Segment>& pred,
                          std::size_t t_len);

// Fraction of gt segments containing at least one step predicted with the
// segment's label.
double localization_recall(const std::vector<Segment>& gt,
                           const std::vector<std::uint32_t>& pred_labels);

// Row indices of the k largest entries in one activation column,
// descending, ties by index.
std::vector<std::size_t> top_activating(const Tensor& activations, std::size_t capsule,
                                        std::size_t k);

// Embeds every row of feats; sharded over `threads` workers, output
// identical regardless of the thread count.
Tensor embed_all(CapsuleModel& model, const Tensor& feats, Modality m, std::size_t threads = 1);

}  // namespace mmcaps
