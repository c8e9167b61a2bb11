#include "commands.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <thread>

#include <nlohmann/json.hpp>

#include "mmcaps/bench.hpp"
#include "mmcaps/checkpoint.hpp"
#include "mmcaps/errors.hpp"
#include "mmcaps/evaluation.hpp"
#include "mmcaps/trainer.hpp"

namespace mmtool {

using namespace mmcaps;
using nlohmann::json;

namespace {

namespace fs = std::filesystem;

std::size_t eval_threads() {
    std::size_t n = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    n = std::min<std::size_t>(n, 8);
    if (const char* env = std::getenv("MMCAPS_THREADS")) {
        char* end = nullptr;
        unsigned long cap = std::strtoul(env, &end, 10);
        if (end && *end == '\0' && cap >= 1) n = std::min<std::size_t>(n, cap);
    }
    return n;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open " + path + " for writing");
    out << text;
    if (!out) throw FormatError("write failed for " + path);
}

TripleDataset load_data_dir(const std::string& dir) {
    return dataset_from_files(dir + "/test_video.mmcf", dir + "/test_audio.mmcf",
                              dir + "/test_text.mmcf");
}

void check_data_dims(const TripleDataset& d, const ModelConfig& m, const std::string& which) {
    if (d.video.cols() != m.video_dim)
        throw ConfigError("video_dim: " + which + " data has " + std::to_string(d.video.cols()) +
                          ", model wants " + std::to_string(m.video_dim));
    if (d.audio.cols() != m.audio_dim)
        throw ConfigError("audio_dim: " + which + " data has " + std::to_string(d.audio.cols()) +
                          ", model wants " + std::to_string(m.audio_dim));
    if (d.text.cols() != m.text_dim)
        throw ConfigError("text_dim: " + which + " data has " + std::to_string(d.text.cols()) +
                          ", model wants " + std::to_string(m.text_dim));
}

// Maximal runs of equal labels in row order; unlabeled rows break runs.
std::vector<Segment> label_runs(const std::vector<std::uint32_t>& labels) {
    std::vector<Segment> segs;
    std::size_t t = 0;
    while (t < labels.size()) {
        if (labels[t] == kUnlabeled) {
            ++t;
            continue;
        }
        std::size_t start = t;
        while (t < labels.size() && labels[t] == labels[start]) ++t;
        segs.push_back({start, t, labels[start]});
    }
    return segs;
}

}  // namespace

void cmd_train(const RunConfig& cfg_in, const std::string& out_dir) {
    RunConfig cfg = cfg_in;
    cfg.validate();
    fs::create_directories(out_dir);

    TripleDataset train_set, test_set;
    if (cfg.uses_feature_files()) {
        train_set = dataset_from_files(cfg.train_video_file, cfg.train_audio_file,
                                       cfg.train_text_file);
        test_set = dataset_from_files(cfg.test_video_file, cfg.test_audio_file,
                                      cfg.test_text_file);
        check_data_dims(train_set, cfg.model, "train");
        check_data_dims(test_set, cfg.model, "test");
    } else {
        SyntheticData data = generate_synthetic(cfg.data);
        train_set = std::move(data.train);
        test_set = std::move(data.test);
    }
    cfg.train.validate(train_set.size());
    cfg.train.checkpoint_path = out_dir + "/checkpoint.mmck";

    for (Modality m : {Modality::video, Modality::audio, Modality::text}) {
        std::string name = to_string(m);
        write_feature_file(out_dir + "/train_" + name + ".mmcf", to_feature_file(train_set, m));
        write_feature_file(out_dir + "/test_" + name + ".mmcf", to_feature_file(test_set, m));
    }

    CapsuleModel model(cfg.model, cfg.train.seed);
    std::ofstream metrics(out_dir + "/metrics.jsonl", std::ios::binary);
    if (!metrics) throw FormatError("cannot open " + out_dir + "/metrics.jsonl for writing");
    TrainResult result = train(model, cfg.train, train_set, nullptr, &metrics);

    std::cout << "trained " << result.steps_run << " steps on " << train_set.size()
              << " clips; loss " << result.initial_loss << " -> " << result.final_loss << "\n"
              << "checkpoint: " << cfg.train.checkpoint_path << "\n";
}

void cmd_eval(const std::string& checkpoint_path, const std::string& data_dir,
              const std::string& modalities, const std::string& task,
              const std::string& report_path) {
    if (modalities != "vt" && modalities != "vat")
        throw ConfigError("modalities: unknown value \"" + modalities + "\" (want vt or vat)");
    if (task != "retrieval" && task != "localization")
        throw ConfigError("task: unknown value \"" + task +
                          "\" (want retrieval or localization)");

    Checkpoint ckpt = load_checkpoint(checkpoint_path);
    CapsuleModel model = model_from_checkpoint(ckpt);
    TripleDataset test_set = load_data_dir(data_dir);
    check_data_dims(test_set, model.config(), "test");

    std::size_t threads = eval_threads();
    Tensor text_embs = embed_all(model, test_set.text, Modality::text, threads);
    Tensor gallery = embed_all(model, test_set.video, Modality::video, threads);
    if (modalities == "vat") {
        Tensor audio_embs = embed_all(model, test_set.audio, Modality::audio, threads);
        gallery = fuse_video_audio(gallery, audio_embs);
    }

    json report;
    if (task == "retrieval") {
        RetrievalReport rep = retrieval_metrics(text_embs, gallery);
        report = {{"r1", rep.r_at(1)},
                  {"r5", rep.r_at(5)},
                  {"r10", rep.r_at(10)},
                  {"medr", rep.med_r}};
    } else {
        std::vector<Segment> gt = label_runs(test_set.labels);
        if (gt.empty()) throw ConfigError("labels: localization needs labeled clips");
        // one text embedding per action: the mean over that label's clips
        std::map<std::uint32_t, std::vector<std::size_t>> by_label;
        for (std::size_t i = 0; i < test_set.labels.size(); ++i)
            if (test_set.labels[i] != kUnlabeled) by_label[test_set.labels[i]].push_back(i);
        Tensor actions(by_label.size(), text_embs.cols());
        std::vector<std::uint32_t> action_label;
        for (const auto& [label, rows] : by_label) {
            std::size_t a = action_label.size();
            for (std::size_t i : rows)
                for (std::size_t j = 0; j < text_embs.cols(); ++j)
                    actions(a, j) += text_embs(i, j) / static_cast<double>(rows.size());
            action_label.push_back(label);
        }
        std::vector<std::size_t> steps = localize(gallery, actions);
        std::vector<std::uint32_t> pred_labels(steps.size());
        for (std::size_t t = 0; t < steps.size(); ++t) pred_labels[t] = action_label[steps[t]];
        std::vector<Segment> pred = label_runs(pred_labels);
        SegmentationScore score = iod_iou(gt, pred, test_set.size());
        report = {{"recall", localization_recall(gt, pred_labels)},
                  {"iod", score.iod},
                  {"iou", score.iou}};
    }

    std::string text = report.dump(2) + "\n";
    std::cout << text;
    if (!report_path.empty()) write_text_file(report_path, text);
}

void cmd_bench(const std::string& grid_path, const std::string& out_path) {
    std::ifstream in(grid_path);
    if (!in) throw ConfigError("grid: cannot open " + grid_path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("grid: " + grid_path + " is not valid JSON: " + std::string(e.what()));
    }
    if (!doc.is_object() || !doc.contains("rows") || !doc["rows"].is_array())
        throw ConfigError("grid: expected an object with a \"rows\" array");

    BenchConfig cfg;
    for (const auto& [key, value] : doc.items()) {
        if (key == "rows") continue;
        if (key == "batch")
            cfg.batch = value.get<std::size_t>();
        else if (key == "repeats")
            cfg.repeats = value.get<std::size_t>();
        else if (key == "warmups")
            cfg.warmups = value.get<std::size_t>();
        else if (key == "seed")
            cfg.seed = value.get<std::uint64_t>();
        else
            throw ConfigError("grid: unknown key \"" + key + "\"");
    }
    for (const auto& row : doc["rows"]) {
        BenchRowSpec spec;
        for (const auto& [key, value] : row.items()) {
            if (key == "routing")
                spec.routing = routing_from_string(value.get<std::string>());
            else if (key == "capsules")
                spec.capsules = value.get<std::size_t>();
            else if (key == "d1")
                spec.d1 = value.get<std::size_t>();
            else if (key == "d2")
                spec.d2 = value.get<std::size_t>();
            else if (key == "iters")
                spec.iters = value.get<std::size_t>();
            else
                throw ConfigError("grid: unknown row key \"" + key + "\"");
        }
        cfg.rows.push_back(spec);
    }
    cfg.validate();

    std::vector<BenchRow> rows = run_bench(cfg);
    std::string csv = bench_csv(rows);
    std::cout << csv;
    write_text_file(out_path, csv);
    write_text_file(out_path + ".json", bench_json(rows));
}

void cmd_inspect(const std::string& checkpoint_path, const std::string& data_dir, long capsule,
                 std::size_t top_n) {
    Checkpoint ckpt = load_checkpoint(checkpoint_path);
    CapsuleModel model = model_from_checkpoint(ckpt);
    TripleDataset test_set = load_data_dir(data_dir);
    check_data_dims(test_set, model.config(), "test");

    std::size_t c_total = model.config().capsules;
    if (capsule >= 0 && static_cast<std::size_t>(capsule) >= c_total)
        throw ConfigError("capsule: index " + std::to_string(capsule) + " out of range [0, " +
                          std::to_string(c_total) + ")");
    std::size_t n = test_set.size();
    if (top_n < 1 || top_n > n)
        throw ConfigError("top: want 1 <= N <= " + std::to_string(n) + ", got " +
                          std::to_string(top_n));

    // video-capsule activations for every test clip
    Tensor acts(n, c_total);
    for (std::size_t i = 0; i < n; ++i) {
        CapsuleSet caps = model.secondary_capsules(test_set.row(Modality::video, i),
                                                   Modality::video);
        for (std::size_t c = 0; c < c_total; ++c) acts(i, c) = caps.activations(c, 0);
    }

    std::size_t first = capsule < 0 ? 0 : static_cast<std::size_t>(capsule);
    std::size_t last = capsule < 0 ? c_total : first + 1;
    double purity_sum = 0;
    std::size_t purity_count = 0;
    for (std::size_t c = first; c < last; ++c) {
        std::vector<std::size_t> top = top_activating(acts, c, top_n);
        std::map<std::uint32_t, std::size_t> counts;
        std::size_t labeled = 0;
        std::cout << "capsule " << c << ":";
        for (std::size_t i : top) {
            std::cout << " " << i;
            if (test_set.labels[i] != kUnlabeled) {
                std::cout << "(" << test_set.labels[i] << ")";
                ++counts[test_set.labels[i]];
                ++labeled;
            }
        }
        if (labeled > 0) {
            std::size_t best = 0;
            for (const auto& [label, cnt] : counts) best = std::max(best, cnt);
            double purity = static_cast<double>(best) / static_cast<double>(labeled);
            purity_sum += purity;
            ++purity_count;
            std::cout << "  purity " << purity;
        }
        std::cout << "\n";
    }
    if (purity_count > 0)
        std::cout << "mean purity " << purity_sum / static_cast<double>(purity_count) << " over "
                  << purity_count << " capsules\n";
}

}  // namespace mmtool
