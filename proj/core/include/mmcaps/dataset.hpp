#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmcaps/model.hpp"
#include "mmcaps/tensor.hpp"

namespace mmcaps {

inline constexpr std::uint32_t kUnlabeled = 0xFFFFFFFFu;

struct SyntheticSpec {
    std::size_t n_concepts = 8;
    std::size_t n_train = 1024;
    std::size_t n_test = 256;
    std::size_t video_dim = 64;
    std::size_t audio_dim = 48;
    std::size_t text_dim = 32;
    double noise_sigma = 0.25;
    double cross_modal_offset_sigma = 0.1;
    std::size_t clips_per_video = 4;
    std::uint64_t seed = 0;

    void validate() const;
};

// Row-aligned clip features: row i of each modality describes the same clip.
struct TripleDataset {
    Tensor video, audio, text;
    std::vector<std::uint32_t> labels;     // concept per clip
    std::vector<std::uint32_t> video_ids;  // source video per clip

    std::size_t size() const { return labels.size(); }
    const Tensor& features(Modality m) const;
    std::vector<double> row(Modality m, std::size_t i) const;
};

struct SyntheticData {
    TripleDataset train, test;
    Tensor proto_video, proto_audio, proto_text;  // n_concepts x dim
    const Tensor& prototypes(Modality m) const;
};

// Clips are grouped into "videos" of clips_per_video clips sharing one
// concept. A clip's feature in modality m is the concept prototype plus a
// jitter shared by the clip's modalities (leading dims of one draw) plus
// per-modality noise. Deterministic in spec.seed; test clips are fresh
// draws from the same prototypes.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

// Binary feature file, one modality per file.
struct FeatureFile {
    Modality modality = Modality::video;
    std::size_t dim = 0;
    std::vector<std::vector<float>> features;
    std::vector<std::uint32_t> labels;  // kUnlabeled where absent
};

void write_feature_file(const std::string& path, const FeatureFile& f);
FeatureFile read_feature_file(const std::string& path);

FeatureFile to_feature_file(const TripleDataset& d, Modality m);
TripleDataset dataset_from_files(const std::string& video_path, const std::string& audio_path,
                                 const std::string& text_path);

}  // namespace mmcaps
