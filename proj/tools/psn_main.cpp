#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "psn/checkpoint.hpp"
#include "psn/degrade.hpp"
#include "psn/image_io.hpp"
#include "psn/metrics.hpp"
#include "psn/model.hpp"
#include "psn/patches.hpp"
#include "psn/selfcheck.hpp"

namespace fs = std::filesystem;
using namespace psn;

namespace {

std::map<std::string, std::string> parse_kv_file(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file " + path.string());
    std::map<std::string, std::string> kv;
    std::string line;
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return (b == std::string::npos) ? std::string() : s.substr(b, e - b + 1);
    };
    while (std::getline(f, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("malformed config line: " + line);
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

struct TrainSpec {
    PsnConfig model;
    TrainConfig train;
    int patch_size = 32;
    int samples_per_image = 100;
    bool augment = false;
};

TrainSpec parse_train_config(const fs::path& path) {
    auto kv = parse_kv_file(path);
    TrainSpec ts;
    std::ostringstream model_text;
    for (auto it = kv.begin(); it != kv.end();) {
        const auto& [key, val] = *it;
        bool taken = true;
        if (key == "patch_size") ts.patch_size = std::stoi(val);
        else if (key == "samples_per_image") ts.samples_per_image = std::stoi(val);
        else if (key == "augment") ts.augment = std::stoi(val) != 0;
        else if (key == "epochs") ts.train.epochs = std::stoi(val);
        else if (key == "batch_size") ts.train.batch_size = std::stoi(val);
        else if (key == "lr") ts.train.learning_rate = std::stod(val);
        else if (key == "lr_decay_every") ts.train.lr_decay_every = std::stoi(val);
        else if (key == "seed") ts.train.seed = std::stoull(val);
        else taken = false;
        if (taken) {
            it = kv.erase(it);
        } else {
            model_text << key << " = " << val << "\n";
            ++it;
        }
    }
    // Remaining keys must all be model keys; PsnConfig rejects unknown ones.
    ts.model = PsnConfig::from_text(model_text.str());
    return ts;
}

int cmd_degrade(const fs::path& in_dir, const fs::path& out_dir, const std::string& task,
                double sigma, int scale, std::uint64_t seed) {
    DegradationSpec spec;
    if (task == "denoise") {
        spec.kind = TaskKind::Denoise;
        spec.sigma = sigma;
        spec.scale = 1;
    } else if (task == "sr") {
        spec.kind = TaskKind::Superres;
        spec.sigma = 0;
        spec.scale = scale;
    } else {
        throw ConfigError("task must be denoise or sr");
    }
    fs::create_directories(out_dir);
    std::uint64_t i = 0;
    for (const auto& path : list_images(in_dir)) {
        DegradationSpec s = spec;
        s.seed = seed + (i++);
        Tensor y = apply_forward_model(read_image(path), s);
        write_image(y, out_dir / path.filename());
    }
    std::ofstream(out_dir / "degradation.txt") << spec.to_text();
    return 0;
}

int cmd_train(const fs::path& data_dir, const fs::path& config_path, const fs::path& out_path) {
    TrainSpec ts = parse_train_config(config_path);
    PatchSource src;
    src.directory = data_dir;
    src.patch_size = ts.patch_size;
    src.samples_per_image = ts.samples_per_image;
    src.seed = ts.train.seed;
    src.augment = ts.augment;
    TrainDataset dataset{sample_patches(src)};
    if (dataset.patches.empty()) throw ConfigError("no training patches found in " + data_dir.string());
    std::cerr << "training on " << dataset.patches.size() << " patches\n";
    PsnModel model = init_psn_model(ts.model, ts.train.seed);
    TrainResult tr = train_psn(model, dataset, ts.train);
    save_checkpoint(model, out_path);
    fs::path curve_path = out_path;
    curve_path.replace_extension(".loss.csv");
    std::ofstream curve(curve_path);
    curve << "epoch,loss\n" << std::setprecision(12);
    for (std::size_t e = 0; e < tr.loss_curve.size(); ++e)
        curve << e << "," << tr.loss_curve[e] << "\n";
    std::cerr << "wrote " << out_path.string() << " and " << curve_path.string() << "\n";
    return 0;
}

DegradationSpec spec_for_model(const PsnModel& model) {
    DegradationSpec spec;
    spec.kind = model.config.task;
    spec.scale = (model.config.task == TaskKind::Superres) ? model.config.sr_scale : 1;
    spec.sigma = 0;
    return spec;
}

int cmd_restore(const fs::path& model_path, const fs::path& in_dir, const fs::path& out_dir) {
    PsnModel model = load_checkpoint(model_path);
    const DegradationSpec spec = spec_for_model(model);
    fs::create_directories(out_dir);
    for (const auto& path : list_images(in_dir)) {
        Tensor out = restore(model, read_image(path), spec);
        write_image(out, out_dir / path.filename());
    }
    return 0;
}

int cmd_eval(const fs::path& model_path, const fs::path& clean_dir, const fs::path& degraded_dir,
             const fs::path& report_path) {
    PsnModel model = load_checkpoint(model_path);
    const DegradationSpec spec = spec_for_model(model);
    EvalReport report;
    for (const auto& clean_path : list_images(clean_dir)) {
        const fs::path deg_path = degraded_dir / clean_path.filename();
        if (!fs::exists(deg_path)) {
            std::cerr << "warning: no degraded counterpart for " << clean_path.filename().string() << "\n";
            continue;
        }
        Tensor clean = read_image(clean_path);
        Tensor restored = restore(model, read_image(deg_path), spec);
        EvalEntry e;
        e.name = clean_path.filename().string();
        e.psnr_db = psnr(restored, clean);
        e.ssim_val = ssim(restored, clean);
        report.entries.push_back(std::move(e));
    }
    std::ofstream(report_path) << report.to_csv();
    std::cout << report.to_table();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"proximal splitting network image restoration"};
    app.require_subcommand(1);

    std::string in_dir, out_dir, task = "denoise", model_path, config_path, data_dir;
    std::string clean_dir, degraded_dir, report_path = "report.csv";
    double sigma = 0;
    int scale = 2;
    std::uint64_t seed = 0;

    auto* degrade = app.add_subcommand("degrade", "apply the forward degradation model");
    degrade->add_option("--in", in_dir, "input image directory")->required();
    degrade->add_option("--out", out_dir, "output directory")->required();
    degrade->add_option("--task", task, "denoise or sr");
    degrade->add_option("--sigma", sigma, "noise std on [0,1] intensities");
    degrade->add_option("--scale", scale, "SR downsampling factor");
    degrade->add_option("--seed", seed, "RNG seed");

    auto* train = app.add_subcommand("train", "train a model");
    train->add_option("--data", data_dir, "clean training image directory")->required();
    train->add_option("--config", config_path, "key = value training config")->required();
    train->add_option("--out", model_path, "output checkpoint path")->required();

    auto* restore_cmd = app.add_subcommand("restore", "restore degraded images");
    restore_cmd->add_option("--model", model_path, "model checkpoint")->required();
    restore_cmd->add_option("--in", in_dir, "degraded image directory")->required();
    restore_cmd->add_option("--out", out_dir, "output directory")->required();

    auto* eval = app.add_subcommand("eval", "restore and report PSNR/SSIM");
    eval->add_option("--model", model_path, "model checkpoint")->required();
    eval->add_option("--clean", clean_dir, "clean reference directory")->required();
    eval->add_option("--degraded", degraded_dir, "degraded input directory")->required();
    eval->add_option("--report", report_path, "CSV report path");

    auto* selfcheck = app.add_subcommand("selfcheck", "run numerical verification checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << e.what() << "\n";
        return 2;
    }

    try {
        if (degrade->parsed()) return cmd_degrade(in_dir, out_dir, task, sigma, scale, seed);
        if (train->parsed()) return cmd_train(data_dir, config_path, model_path);
        if (restore_cmd->parsed()) return cmd_restore(model_path, in_dir, out_dir);
        if (eval->parsed()) return cmd_eval(model_path, clean_dir, degraded_dir, report_path);
        if (selfcheck->parsed()) return run_selfcheck(std::cout) ? 0 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
