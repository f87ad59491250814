// antnet command-line tool: model profiling, deterministic forward passes,
// gradient checking, and detection-metric evaluation.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "antnet/gradcheck.hpp"
#include "antnet/io.hpp"
#include "antnet/profiler.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

struct RunConfig {
    std::string model = "yolo-ant";
    int nc = 80;
    antnet::i64 input_size = 640;
    antnet::u64 seed = 0;
    double conf = 0.25;
    double iou = 0.45;
    bool csv = false;
};

void check_input_size(const RunConfig& cfg) {
    if (cfg.input_size < 32 || cfg.input_size % 32 != 0)
        throw antnet::GeometryError("--input-size must be a positive multiple of 32");
}

int cmd_describe(const RunConfig& cfg) {
    check_input_size(cfg);
    antnet::Graph g = antnet::build_model(cfg.model, cfg.nc);
    antnet::ProfileReport rep = antnet::profile(g, cfg.input_size, cfg.input_size);
    std::cout << (cfg.csv ? antnet::report_to_csv(rep) : antnet::report_to_text(rep));
    return kExitOk;
}

antnet::Tensor4<float> load_input(const std::string& path) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw antnet::ParseError("cannot open '" + path + "'", 0);
    char magic[4] = {0, 0, 0, 0};
    probe.read(magic, 4);
    probe.close();
    if (std::string(magic, 4) == "ATF1") return antnet::read_atf<float>(path);
    if (magic[0] == 'P' && magic[1] == '6') return antnet::read_ppm(path);
    throw antnet::ParseError("input must be an ATF tensor or a binary P6 PPM", 0);
}

int cmd_forward(const RunConfig& cfg, const std::string& input_path, const std::string& weights_path,
                const std::string& output_path) {
    antnet::Tensor4<float> x = load_input(input_path);
    if (x.c != 3) throw antnet::DimensionError("forward input must have 3 channels");
    if (x.h % 32 != 0 || x.w % 32 != 0)
        throw antnet::GeometryError("forward input dims must be divisible by 32, got " + x.shape_str());

    antnet::Graph g = antnet::build_model(cfg.model, cfg.nc);
    antnet::Model<float> model(g, cfg.seed);
    if (!weights_path.empty()) antnet::load_weights(weights_path, model);

    std::vector<antnet::Tensor4<float>> heads = model.forward(x);
    const std::string image_id = std::filesystem::path(input_path).stem().string();
    std::vector<antnet::DetectionBox> dets =
        antnet::decode(heads, cfg.nc, {8, 16, 32}, antnet::default_anchors(), cfg.conf, image_id);
    dets = antnet::nms(dets, cfg.iou);

    if (output_path.empty()) {
        antnet::write_detections(std::cout, dets);
    } else {
        std::ofstream os(output_path);
        if (!os) throw antnet::ParseError("cannot open '" + output_path + "' for writing", 0);
        antnet::write_detections(os, dets);
    }
    return kExitOk;
}

int cmd_gradcheck(antnet::u64 seed, double tol) {
    const std::vector<antnet::GradReport> reports = antnet::gradcheck_all(seed, tol);
    bool all_passed = true;
    for (const auto& r : reports) {
        std::printf("%-18s probes=%-3d max_rel=%.3e max_abs=%.3e %s\n", r.op_name.c_str(), r.n_probes,
                    r.max_rel_err, r.max_abs_err, r.passed ? "PASS" : "FAIL");
        all_passed = all_passed && r.passed;
    }
    std::printf("gradcheck %s (tol %.1e)\n", all_passed ? "PASS" : "FAIL", tol);
    return all_passed ? kExitOk : 1;
}

int cmd_eval(const std::string& gt_path, const std::string& det_path, bool csv) {
    const auto gts = antnet::read_ground_truth(gt_path);
    const auto dets = antnet::read_detections(det_path);
    const antnet::EvalMetrics m = antnet::evaluate(dets, gts);
    if (csv) {
        std::printf("metric,value\n");
        std::printf("precision,%.6f\n", m.precision);
        std::printf("recall,%.6f\n", m.recall);
        std::printf("map50,%.6f\n", m.map50);
        std::printf("map5095,%.6f\n", m.map5095);
        std::printf("map_small,%.6f\n", m.map_small);
        std::printf("map_medium,%.6f\n", m.map_medium);
        std::printf("map_large,%.6f\n", m.map_large);
    } else {
        std::printf("P          %.6f\n", m.precision);
        std::printf("R          %.6f\n", m.recall);
        std::printf("mAP.5      %.6f\n", m.map50);
        std::printf("mAP.5:.95  %.6f\n", m.map5095);
        std::printf("mAP small  %.6f\n", m.map_small);
        std::printf("mAP medium %.6f\n", m.map_medium);
        std::printf("mAP large  %.6f\n", m.map_large);
    }
    return kExitOk;
}

int cmd_prune_compare(int nc) {
    antnet::ProfileReport base = antnet::profile(antnet::build_yolov5s(nc), 640, 640);
    antnet::ProfileReport pruned = antnet::profile(antnet::build_yolov5s_pruned(nc), 640, 640);
    antnet::CompareReport cmp = antnet::compare(base, pruned);
    std::printf("%-8s %-22s %10s   %-22s %10s\n", "stage", "yolov5s", "params", "yolov5s-pruned", "params");
    for (const auto& row : cmp.rows) {
        if (row.stage_id != 17 && row.stage_id != 18 && row.stage_id != 20 && row.stage_id != 21 &&
            row.stage_id != 23)
            continue;
        std::printf("%-8d %-22s %10lld   %-22s %10lld\n", row.stage_id, row.desc_a.c_str(),
                    static_cast<long long>(row.params_a), row.desc_b.c_str(),
                    static_cast<long long>(row.params_b));
    }
    std::printf("%-8s %-22s %10.4f   %-22s %10.4f\n", "GFLOPs", "", base.gflops(), "", pruned.gflops());
    std::printf("%-8s %-22s %10lld   %-22s %10lld\n", "total", "", static_cast<long long>(base.total_params),
                "", static_cast<long long>(pruned.total_params));
    std::printf("delta    %lld\n", static_cast<long long>(base.total_params - pruned.total_params));
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"antnet: deterministic detector building blocks, profiling and evaluation"};
    app.require_subcommand(1);

    RunConfig cfg;
    std::string input_path, weights_path, output_path, gt_path, det_path;
    double tol = 1e-4;

    auto add_model_flags = [&cfg](CLI::App* sub) {
        sub->add_option("--model", cfg.model, "yolov5s | yolov5s-pruned | yolo-ant");
        sub->add_option("--nc", cfg.nc, "class count")->check(CLI::PositiveNumber);
        sub->add_option("--input-size", cfg.input_size, "square input side, multiple of 32");
        sub->add_option("--seed", cfg.seed, "weight init seed");
    };

    CLI::App* describe = app.add_subcommand("describe", "per-stage parameter/FLOP report");
    add_model_flags(describe);
    describe->add_flag("--csv", cfg.csv, "emit CSV");

    CLI::App* forward = app.add_subcommand("forward", "run a forward pass and decode detections");
    add_model_flags(forward);
    forward->add_option("input", input_path, "ATF tensor or binary P6 PPM")->required();
    forward->add_option("--weights", weights_path, "ANTW weight container");
    forward->add_option("-o,--output", output_path, "detections file (default stdout)");
    forward->add_option("--conf", cfg.conf, "confidence threshold");
    forward->add_option("--iou", cfg.iou, "NMS IoU threshold");

    CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every primitive and block");
    gradcheck->add_option("--seed", cfg.seed, "probe seed");
    gradcheck->add_option("--tol", tol, "max relative error");

    CLI::App* eval = app.add_subcommand("eval", "detection metrics from ground-truth and detection files");
    eval->add_option("gt", gt_path, "ground-truth text file")->required();
    eval->add_option("det", det_path, "detections text file")->required();
    eval->add_flag("--csv", cfg.csv, "emit CSV");

    CLI::App* prune = app.add_subcommand("prune-compare", "baseline vs pruned parameter table");
    prune->add_option("--nc", cfg.nc, "class count")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (describe->parsed()) return cmd_describe(cfg);
        if (forward->parsed()) return cmd_forward(cfg, input_path, weights_path, output_path);
        if (gradcheck->parsed()) return cmd_gradcheck(cfg.seed, tol);
        if (eval->parsed()) return cmd_eval(gt_path, det_path, cfg.csv);
        if (prune->parsed()) return cmd_prune_compare(cfg.nc);
    } catch (const antnet::ManifestError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitConfig;
}
