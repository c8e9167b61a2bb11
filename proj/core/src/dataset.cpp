#include "mmcaps/dataset.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include "mmcaps/errors.hpp"
#include "mmcaps/rng.hpp"

namespace mmcaps {

void SyntheticSpec::validate() const {
    if (n_concepts < 2) throw ConfigError("concepts: must be >= 2");
    if (n_train < 1) throw ConfigError("train_size: must be >= 1");
    if (n_test < 1) throw ConfigError("test_size: must be >= 1");
    if (video_dim < 1 || audio_dim < 1 || text_dim < 1)
        throw ConfigError("dims: every modality dim must be >= 1");
    if (noise_sigma < 0.0) throw ConfigError("noise_sigma: must be >= 0");
    if (cross_modal_offset_sigma < 0.0) throw ConfigError("offset_sigma: must be >= 0");
    if (clips_per_video < 1) throw ConfigError("clips_per_video: must be >= 1");
}

const Tensor& TripleDataset::features(Modality m) const {
    switch (m) {
        case Modality::video: return video;
        case Modality::audio: return audio;
        case Modality::text: return text;
    }
    return video;
}

std::vector<double> TripleDataset::row(Modality m, std::size_t i) const {
    const Tensor& f = features(m);
    return std::vector<double>(f.row(i), f.row(i) + f.cols());
}

const Tensor& SyntheticData::prototypes(Modality m) const {
    switch (m) {
        case Modality::video: return proto_video;
        case Modality::audio: return proto_audio;
        case Modality::text: return proto_text;
    }
    return proto_video;
}

namespace {

TripleDataset draw_split(const SyntheticSpec& spec, const SyntheticData& base, std::size_t n,
                         Rng stream) {
    TripleDataset d;
    d.video = Tensor(n, spec.video_dim);
    d.audio = Tensor(n, spec.audio_dim);
    d.text = Tensor(n, spec.text_dim);
    d.labels.resize(n);
    d.video_ids.resize(n);

    std::size_t max_dim = std::max({spec.video_dim, spec.audio_dim, spec.text_dim});
    std::vector<double> jitter(max_dim);
    std::vector<std::size_t> concept_clips(spec.n_concepts, 0);

    std::size_t clip = 0, video_id = 0;
    while (clip < n) {
        // keep concept clip counts as even as the video grouping allows
        std::size_t concept_id = 0;
        for (std::size_t c = 1; c < spec.n_concepts; ++c)
            if (concept_clips[c] < concept_clips[concept_id]) concept_id = c;
        std::size_t take = std::min(spec.clips_per_video, n - clip);
        concept_clips[concept_id] += take;
        for (std::size_t s = 0; s < take; ++s, ++clip) {
            d.labels[clip] = static_cast<std::uint32_t>(concept_id);
            d.video_ids[clip] = static_cast<std::uint32_t>(video_id);
            for (std::size_t i = 0; i < max_dim; ++i)
                jitter[i] = spec.cross_modal_offset_sigma * stream.next_normal();
            const Tensor* protos[3] = {&base.proto_video, &base.proto_audio, &base.proto_text};
            Tensor* outs[3] = {&d.video, &d.audio, &d.text};
            for (std::size_t m = 0; m < 3; ++m) {
                const Tensor& mu = *protos[m];
                Tensor& out = *outs[m];
                for (std::size_t i = 0; i < out.cols(); ++i)
                    out(clip, i) =
                        mu(concept_id, i) + jitter[i] + spec.noise_sigma * stream.next_normal();
            }
        }
        ++video_id;
    }
    return d;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    SyntheticData data;
    Rng root(spec.seed);
    Rng proto = root.split(1);
    data.proto_video = Tensor(spec.n_concepts, spec.video_dim);
    data.proto_audio = Tensor(spec.n_concepts, spec.audio_dim);
    data.proto_text = Tensor(spec.n_concepts, spec.text_dim);
    for (Tensor* t : {&data.proto_video, &data.proto_audio, &data.proto_text})
        for (std::size_t i = 0; i < t->size(); ++i) t->at(i) = proto.next_normal();
    data.train = draw_split(spec, data, spec.n_train, root.split(2));
    data.test = draw_split(spec, data, spec.n_test, root.split(3));
    return data;
}

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in, const char* what) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw FormatError(std::string("feature file: truncated reading ") + what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f32(std::ostream& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

float get_f32(std::istream& in, const char* what) {
    std::uint32_t bits = get_u32(in, what);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

constexpr char kMagic[4] = {'M', 'M', 'C', 'F'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

void write_feature_file(const std::string& path, const FeatureFile& f) {
    for (const auto& row : f.features)
        if (row.size() != f.dim)
            throw ShapeError("feature file: row of dim " + std::to_string(row.size()) +
                             " vs declared " + std::to_string(f.dim));
    if (f.labels.size() != f.features.size())
        throw ShapeError("feature file: " + std::to_string(f.labels.size()) + " labels vs " +
                         std::to_string(f.features.size()) + " rows");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("feature file: cannot open " + path + " for writing");
    out.write(kMagic, 4);
    put_u32(out, kVersion);
    out.put(static_cast<char>(static_cast<std::uint8_t>(f.modality)));
    put_u32(out, static_cast<std::uint32_t>(f.features.size()));
    put_u32(out, static_cast<std::uint32_t>(f.dim));
    for (const auto& row : f.features)
        for (float v : row) put_f32(out, v);
    for (std::uint32_t l : f.labels) put_u32(out, l);
    if (!out) throw FormatError("feature file: write failed for " + path);
}

FeatureFile read_feature_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("feature file: cannot open " + path);
    char magic[4];
    if (!in.read(magic, 4)) throw FormatError("feature file: truncated reading magic");
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("feature file: bad magic in " + path);
    std::uint32_t version = get_u32(in, "version");
    if (version != kVersion)
        throw FormatError("feature file: unsupported version " + std::to_string(version));
    int tag = in.get();
    if (tag < 0) throw FormatError("feature file: truncated reading modality");
    if (tag > 2) throw FormatError("feature file: unknown modality tag " + std::to_string(tag));
    FeatureFile f;
    f.modality = static_cast<Modality>(tag);
    std::uint32_t count = get_u32(in, "count");
    f.dim = get_u32(in, "dim");
    f.features.resize(count);
    for (auto& row : f.features) {
        row.resize(f.dim);
        for (auto& v : row) v = get_f32(in, "features");
    }
    f.labels.resize(count);
    for (auto& l : f.labels) l = get_u32(in, "labels");
    return f;
}

FeatureFile to_feature_file(const TripleDataset& d, Modality m) {
    const Tensor& feats = d.features(m);
    FeatureFile f;
    f.modality = m;
    f.dim = feats.cols();
    f.features.resize(feats.rows());
    for (std::size_t i = 0; i < feats.rows(); ++i) {
        f.features[i].resize(f.dim);
        for (std::size_t j = 0; j < f.dim; ++j)
            f.features[i][j] = static_cast<float>(feats(i, j));
    }
    f.labels = d.labels;
    return f;
}

TripleDataset dataset_from_files(const std::string& video_path, const std::string& audio_path,
                                 const std::string& text_path) {
    FeatureFile fv = read_feature_file(video_path);
    FeatureFile fa = read_feature_file(audio_path);
    FeatureFile ft = read_feature_file(text_path);
    if (fv.features.size() != fa.features.size() || fv.features.size() != ft.features.size())
        throw FormatError("dataset: modality files disagree on clip count (" +
                          std::to_string(fv.features.size()) + "/" +
                          std::to_string(fa.features.size()) + "/" +
                          std::to_string(ft.features.size()) + ")");
    if (fv.labels != fa.labels || fv.labels != ft.labels)
        throw FormatError("dataset: modality files disagree on labels");
    TripleDataset d;
    auto to_tensor = [](const FeatureFile& f) {
        Tensor t(f.features.size(), f.dim);
        for (std::size_t i = 0; i < f.features.size(); ++i)
            for (std::size_t j = 0; j < f.dim; ++j) t(i, j) = f.features[i][j];
        return t;
    };
    d.video = to_tensor(fv);
    d.audio = to_tensor(fa);
    d.text = to_tensor(ft);
    d.labels = fv.labels;
    d.video_ids.assign(fv.labels.size(), kUnlabeled);
    return d;
}

}  // namespace mmcaps
