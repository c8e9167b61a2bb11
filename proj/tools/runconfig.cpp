#include "runconfig.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "mmcaps/errors.hpp"

namespace mmtool {

using mmcaps::ConfigError;
using nlohmann::json;

bool RunConfig::uses_feature_files() const {
    return !train_video_file.empty() || !train_audio_file.empty() ||
           !train_text_file.empty() || !test_video_file.empty() ||
           !test_audio_file.empty() || !test_text_file.empty();
}

void RunConfig::validate() const {
    model.validate();
    if (uses_feature_files()) {
        const std::string* paths[] = {&train_video_file, &train_audio_file, &train_text_file,
                                      &test_video_file,  &test_audio_file,  &test_text_file};
        for (const std::string* p : paths)
            if (p->empty())
                throw ConfigError("feature files: all six train/test paths are required together");
    } else {
        data.validate();
        train.validate(data.n_train);
    }
    if (model.video_dim != data.video_dim || model.audio_dim != data.audio_dim ||
        model.text_dim != data.text_dim)
        throw ConfigError("video_dim/audio_dim/text_dim: model and data dims disagree");
}

RunConfig profile_defaults(const std::string& profile) {
    RunConfig cfg;
    cfg.profile = profile;
    if (profile == "desk") {
        cfg.model.routing = mmcaps::Routing::self_attention;
        cfg.model.capsules = 8;
        cfg.model.d1 = 8;
        cfg.model.d2 = 16;
        cfg.model.embed_dim = 32;
        cfg.model.heads = 2;
        cfg.model.hidden_mlp = 64;
        cfg.model.video_dim = 64;
        cfg.model.audio_dim = 48;
        cfg.model.text_dim = 32;
        cfg.train.batch_size = 64;
        cfg.train.total_steps = 300;
    } else if (profile == "paper") {
        // full-scale hyperparameters; untested at desk, kept for reference
        cfg.model = mmcaps::ModelConfig{};
        cfg.train.batch_size = 4096;
        cfg.train.total_steps = 5860;  // about 20 epochs of 1.2M clips
        cfg.data.n_train = 8192;
        cfg.data.n_test = 1024;
        cfg.data.video_dim = cfg.model.video_dim;
        cfg.data.audio_dim = cfg.model.audio_dim;
        cfg.data.text_dim = cfg.model.text_dim;
    } else {
        throw ConfigError("profile: unknown profile \"" + profile + "\" (want desk or paper)");
    }
    return cfg;
}

namespace {

template <typename T>
T get_as(const json& v, const std::string& key) {
    try {
        return v.get<T>();
    } catch (const json::exception&) {
        throw ConfigError(key + ": wrong value type");
    }
}

std::size_t get_size(const json& v, const std::string& key) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
        throw ConfigError(key + ": expected a non-negative integer");
    return get_as<std::size_t>(v, key);
}

void apply_key(RunConfig& cfg, const std::string& key, const json& value) {
    if (key == "profile") {
        // handled by the caller before any other key
        return;
    } else if (key == "routing") {
        cfg.model.routing = mmcaps::routing_from_string(get_as<std::string>(value, key));
    } else if (key == "capsules") {
        cfg.model.capsules = get_size(value, key);
    } else if (key == "d1") {
        cfg.model.d1 = get_size(value, key);
    } else if (key == "d2") {
        cfg.model.d2 = get_size(value, key);
    } else if (key == "embed_dim") {
        cfg.model.embed_dim = get_size(value, key);
    } else if (key == "heads") {
        cfg.model.heads = get_size(value, key);
    } else if (key == "hidden_mlp") {
        cfg.model.hidden_mlp = get_size(value, key);
    } else if (key == "dropout_p") {
        cfg.model.dropout_p = get_as<double>(value, key);
    } else if (key == "routing_iters") {
        cfg.model.routing_iters = get_size(value, key);
    } else if (key == "share_weights") {
        cfg.model.share_weights = get_as<bool>(value, key);
    } else if (key == "video_dim") {
        cfg.model.video_dim = cfg.data.video_dim = get_size(value, key);
    } else if (key == "audio_dim") {
        cfg.model.audio_dim = cfg.data.audio_dim = get_size(value, key);
    } else if (key == "text_dim") {
        cfg.model.text_dim = cfg.data.text_dim = get_size(value, key);
    } else if (key == "lr") {
        cfg.train.lr0 = get_as<double>(value, key);
    } else if (key == "total_steps") {
        cfg.train.total_steps = get_size(value, key);
    } else if (key == "batch_size") {
        cfg.train.batch_size = get_size(value, key);
    } else if (key == "seed") {
        set_seed(cfg, get_as<std::uint64_t>(value, key));
    } else if (key == "delta") {
        cfg.train.delta = get_as<double>(value, key);
    } else if (key == "eval_every") {
        cfg.train.eval_every = get_size(value, key);
    } else if (key == "grad_clip") {
        cfg.train.grad_clip = get_as<double>(value, key);
    } else if (key == "concepts") {
        cfg.data.n_concepts = get_size(value, key);
    } else if (key == "train_clips") {
        cfg.data.n_train = get_size(value, key);
    } else if (key == "test_clips") {
        cfg.data.n_test = get_size(value, key);
    } else if (key == "noise_sigma") {
        cfg.data.noise_sigma = get_as<double>(value, key);
    } else if (key == "offset_sigma") {
        cfg.data.cross_modal_offset_sigma = get_as<double>(value, key);
    } else if (key == "clips_per_video") {
        cfg.data.clips_per_video = get_size(value, key);
    } else if (key == "train_video_file") {
        cfg.train_video_file = get_as<std::string>(value, key);
    } else if (key == "train_audio_file") {
        cfg.train_audio_file = get_as<std::string>(value, key);
    } else if (key == "train_text_file") {
        cfg.train_text_file = get_as<std::string>(value, key);
    } else if (key == "test_video_file") {
        cfg.test_video_file = get_as<std::string>(value, key);
    } else if (key == "test_audio_file") {
        cfg.test_audio_file = get_as<std::string>(value, key);
    } else if (key == "test_text_file") {
        cfg.test_text_file = get_as<std::string>(value, key);
    } else {
        throw ConfigError("config: unknown key \"" + key + "\"");
    }
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config: " + path + " is not valid JSON: " + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config: top level must be a JSON object");
    std::string profile = "desk";
    if (doc.contains("profile")) profile = get_as<std::string>(doc["profile"], "profile");
    RunConfig cfg = profile_defaults(profile);
    for (const auto& [key, value] : doc.items()) apply_key(cfg, key, value);
    return cfg;
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
    auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("override: expected key=value, got \"" + assignment + "\"");
    std::string key = assignment.substr(0, eq);
    std::string raw = assignment.substr(eq + 1);
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;  // bare words are strings
    if (key == "profile") throw ConfigError("profile: set it in the config file, not a flag");
    apply_key(cfg, key, value);
}

void set_seed(RunConfig& cfg, std::uint64_t seed) {
    cfg.train.seed = seed;
    cfg.data.seed = seed;
}

}  // namespace mmtool
