#pragma once

#include <algorithm>
#include <cctype>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pcmsar/errors.hpp"
#include "pcmsar/image.hpp"
#include "pcmsar/image_io.hpp"
#include "pcmsar/noise.hpp"
#include "pcmsar/rng.hpp"
#include "pcmsar/sampling.hpp"
#include "pcmsar/trainer.hpp"

namespace pcmsar {

inline constexpr const char* kToolVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Run configuration: flat key=value file ('#' comments), overridable by CLI
// flags. The manifest embeds the effective values so a run can be replayed.
// ---------------------------------------------------------------------------

struct RunConfig {
    std::string input_dir;
    std::string output_dir;
    std::uint64_t seed = 1;
    int views_per_image = 2;
    NoiseParams noise;
    GlcmConfig glcm;
    SsgConfig ssg;
    TrainerConfig trainer;

    void apply_kv(const std::string& key, const std::string& value);
    static RunConfig from_file(const std::string& path);

    nlohmann::ordered_json echo_json() const {
        nlohmann::ordered_json j;
        j["seed"] = seed;
        j["views_per_image"] = views_per_image;
        j["noise.alpha"] = noise.alpha;
        j["noise.gamma"] = noise.gamma;
        j["noise.delta"] = noise.delta;
        j["noise.beta1"] = noise.beta1;
        j["noise.beta2"] = noise.beta2;
        j["noise.beta3"] = noise.beta3;
        j["noise.sigma0"] = noise.sigma0;
        j["noise.phase_sigma"] = noise.phase_sigma;
        j["noise.block"] = noise.block;
        j["glcm.levels"] = glcm.levels;
        j["glcm.dx"] = glcm.offset.dx;
        j["glcm.dy"] = glcm.offset.dy;
        j["ssg.blur_sigma"] = ssg.blur_sigma;
        j["ssg.threshold"] = ssg.threshold;
        j["ssg.min_dist"] = ssg.min_dist;
        j["ssg.candidates"] = ssg.candidates;
        j["ssg.patch_w"] = ssg.patch_w;
        j["ssg.patch_h"] = ssg.patch_h;
        j["trainer.steps"] = trainer.steps;
        j["trainer.batch"] = trainer.batch;
        j["trainer.lr"] = trainer.lr;
        j["trainer.temperature"] = trainer.temperature;
        j["trainer.ema_m"] = trainer.ema_m;
        j["trainer.lambda1"] = trainer.loss_weights.lambda1;
        j["trainer.lambda2"] = trainer.loss_weights.lambda2;
        return j;
    }

    static RunConfig from_echo(const nlohmann::ordered_json& j) {
        RunConfig c;
        for (auto it = j.begin(); it != j.end(); ++it) {
            std::ostringstream ss;
            if (it.value().is_number_float()) {
                ss.precision(17);
                ss << it.value().get<double>();
            } else {
                ss << it.value();
            }
            c.apply_kv(it.key(), ss.str());
        }
        return c;
    }
};

inline void RunConfig::apply_kv(const std::string& key,
                                const std::string& value) {
    auto as_d = [&] { return std::stod(value); };
    auto as_i = [&] { return std::stoi(value); };
    auto as_u64 = [&] { return std::stoull(value); };

    if (key == "input_dir") input_dir = value;
    else if (key == "output_dir") output_dir = value;
    else if (key == "seed") seed = as_u64();
    else if (key == "views_per_image") views_per_image = as_i();
    else if (key == "noise.alpha") noise.alpha = as_d();
    else if (key == "noise.gamma") noise.gamma = as_d();
    else if (key == "noise.delta") noise.delta = as_d();
    else if (key == "noise.beta1") noise.beta1 = as_d();
    else if (key == "noise.beta2") noise.beta2 = as_d();
    else if (key == "noise.beta3") noise.beta3 = as_d();
    else if (key == "noise.sigma0") noise.sigma0 = as_d();
    else if (key == "noise.phase_sigma") noise.phase_sigma = as_d();
    else if (key == "noise.block") noise.block = as_i();
    else if (key == "glcm.levels") glcm.levels = as_i();
    else if (key == "glcm.dx") glcm.offset.dx = as_i();
    else if (key == "glcm.dy") glcm.offset.dy = as_i();
    else if (key == "ssg.blur_sigma") ssg.blur_sigma = as_d();
    else if (key == "ssg.threshold") ssg.threshold = as_d();
    else if (key == "ssg.min_dist") ssg.min_dist = as_d();
    else if (key == "ssg.candidates") ssg.candidates = as_i();
    else if (key == "ssg.patch_w") ssg.patch_w = as_i();
    else if (key == "ssg.patch_h") ssg.patch_h = as_i();
    else if (key == "trainer.steps") trainer.steps = as_i();
    else if (key == "trainer.batch") trainer.batch = as_i();
    else if (key == "trainer.lr") trainer.lr = as_d();
    else if (key == "trainer.temperature") trainer.temperature = as_d();
    else if (key == "trainer.ema_m") trainer.ema_m = as_d();
    else if (key == "trainer.lambda1") trainer.loss_weights.lambda1 = as_d();
    else if (key == "trainer.lambda2") trainer.loss_weights.lambda2 = as_d();
    else throw UsageError("unknown config key: " + key);
}

inline RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    RunConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto notspace = [](unsigned char c) { return !std::isspace(c); };
        line.erase(line.begin(),
                   std::find_if(line.begin(), line.end(), notspace));
        line.erase(std::find_if(line.rbegin(), line.rend(), notspace).base(),
                   line.end());
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw UsageError(path + ":" + std::to_string(lineno) +
                             ": expected key=value");
        std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        auto trim = [&](std::string& s) {
            s.erase(s.begin(), std::find_if(s.begin(), s.end(), notspace));
            s.erase(std::find_if(s.rbegin(), s.rend(), notspace).base(),
                    s.end());
        };
        trim(key);
        trim(value);
        cfg.apply_kv(key, value);
    }
    return cfg;
}

// ---------------------------------------------------------------------------
// Batch augmentation
// ---------------------------------------------------------------------------

struct FileRecord {
    std::string source;        // file name inside input_dir
    std::string content_hash;  // fnv1a-64 of the raw bytes, hex
    bool ok = false;
    std::string error;
    std::vector<std::string> nsg_views;   // written file names
    std::vector<std::string> ssg_patches;
    nlohmann::ordered_json nsg_summary;
    nlohmann::ordered_json ssg_meta;
};

struct Manifest {
    std::string tool_version = kToolVersion;
    std::string timestamp;  // excluded from determinism comparisons
    nlohmann::ordered_json config_echo;
    std::vector<FileRecord> records;
    int total_inputs = 0;
    int total_ok = 0;
    int total_failed = 0;
    int total_nsg_views = 0;
    int total_ssg_patches = 0;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["tool_version"] = tool_version;
        j["timestamp"] = timestamp;
        j["config"] = config_echo;
        j["inputs"] = nlohmann::ordered_json::array();
        for (const FileRecord& r : records) {
            nlohmann::ordered_json e;
            e["source"] = r.source;
            e["content_hash"] = r.content_hash;
            e["ok"] = r.ok;
            if (!r.ok) e["error"] = r.error;
            e["nsg_views"] = r.nsg_views;
            e["nsg_summary"] = r.nsg_summary;
            e["ssg_patches"] = r.ssg_patches;
            e["ssg"] = r.ssg_meta;
            j["inputs"].push_back(e);
        }
        j["totals"] = {{"inputs", total_inputs},
                       {"ok", total_ok},
                       {"failed", total_failed},
                       {"nsg_views", total_nsg_views},
                       {"ssg_patches", total_ssg_patches}};
        return j;
    }
};

namespace detail {

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

inline std::string now_iso8601() {
    std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

inline std::vector<std::string> list_images(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir))
        throw IoError("input directory does not exist: " + dir);
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        std::string ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(),
                       [](unsigned char c) { return std::tolower(c); });
        if (ext == ".pgm" || ext == ".png")
            names.push_back(e.path().filename().string());
    }
    std::sort(names.begin(), names.end());  // order-independent processing
    return names;
}

}  // namespace detail

// Augments every image in input_dir: views_per_image speckle views plus one
// patch set per input, all written as PGM. Per-file randomness is seeded by
// seed XOR fnv1a64(file name), so the result does not depend on processing
// order. Decode failures are recorded and skipped.
inline Manifest run_augment(const RunConfig& cfg) {
    namespace fs = std::filesystem;
    if (cfg.views_per_image < 1)
        throw UsageError("views_per_image must be >= 1");
    cfg.noise.validate();

    std::vector<std::string> names = detail::list_images(cfg.input_dir);
    if (names.empty())
        throw UsageError("no .pgm/.png inputs in " + cfg.input_dir);

    std::error_code ec;
    fs::create_directories(cfg.output_dir, ec);
    if (!fs::is_directory(cfg.output_dir))
        throw IoError("cannot create output directory: " + cfg.output_dir);

    Manifest man;
    man.timestamp = detail::now_iso8601();
    man.config_echo = cfg.echo_json();
    man.total_inputs = static_cast<int>(names.size());

    for (const std::string& name : names) {
        FileRecord rec;
        rec.source = name;
        std::string in_path = (fs::path(cfg.input_dir) / name).string();
        std::string stem = fs::path(name).stem().string();
        try {
            auto bytes = detail::read_file(in_path);
            rec.content_hash = detail::hex64(fnv1a64(
                std::string_view(reinterpret_cast<const char*>(bytes.data()),
                                 bytes.size())));
            GrayImage img = load_image(in_path);
            Rng file_rng(cfg.seed ^ fnv1a64(name));

            for (int v = 0; v < cfg.views_per_image; ++v) {
                auto [noisy, report] = generate_noise_view(
                    img, cfg.noise, cfg.glcm,
                    file_rng.fork(static_cast<std::uint64_t>(v)));
                std::string out_name =
                    stem + "__nsg" + std::to_string(v) + ".pgm";
                save_pgm(noisy, (fs::path(cfg.output_dir) / out_name).string());
                rec.nsg_views.push_back(out_name);
                if (v == 0)
                    rec.nsg_summary = report.to_json()["summary"];
            }

            PatchSet patches =
                ssg_views(img, cfg.ssg, file_rng.fork(0xff00ull));
            for (std::size_t p = 0; p < patches.patches.size(); ++p) {
                std::string out_name = stem + "__ssg_p" +
                                       (p < 10 ? "0" : "") +
                                       std::to_string(p) + ".pgm";
                save_pgm(patches.patches[p].crop,
                         (fs::path(cfg.output_dir) / out_name).string());
                rec.ssg_patches.push_back(out_name);
            }
            rec.ssg_meta = patches.metadata_json();
            rec.ok = true;
            man.total_ok += 1;
            man.total_nsg_views += static_cast<int>(rec.nsg_views.size());
            man.total_ssg_patches += static_cast<int>(rec.ssg_patches.size());
        } catch (const FormatError& e) {
            rec.ok = false;
            rec.error = e.what();
            man.total_failed += 1;
        }
        man.records.push_back(std::move(rec));
    }

    if (man.total_ok == 0)
        throw UsageError("every input failed to decode in " + cfg.input_dir);

    std::ofstream out(fs::path(cfg.output_dir) / "manifest.json");
    if (!out) throw IoError("cannot write manifest.json");
    out << man.to_json().dump(2) << "\n";
    return man;
}

// ---------------------------------------------------------------------------
// Training demo: run the toy trainer, dump JSON-lines step records plus a
// summary record.
// ---------------------------------------------------------------------------

inline TrainReport run_train_demo(const RunConfig& cfg,
                                  const std::string& report_path) {
    TrainerConfig tc = cfg.trainer;
    tc.seed = cfg.seed;
    TrainReport report = run_training(tc);

    std::ofstream out(report_path);
    if (!out) throw IoError("cannot write train report: " + report_path);
    for (const StepRecord& r : report.steps) {
        nlohmann::ordered_json j;
        j["step"] = r.step;
        j["L1"] = r.losses.l1;
        j["L2"] = r.losses.l2;
        j["L_cl1"] = r.losses.lcl1;
        j["L_cl2"] = r.losses.lcl2;
        j["L_ml1"] = r.losses.lml1;
        j["L_ml2"] = r.losses.lml2;
        out << j.dump() << "\n";
    }
    nlohmann::ordered_json summary;
    summary["summary"] = true;
    summary["seed"] = report.seed;
    summary["knn_acc"] = report.knn_acc;
    summary["linear_acc"] = report.linear_acc;
    summary["knn_random"] = report.knn_random;
    summary["linear_random"] = report.linear_random;
    summary["config"] = report.config_echo;
    out << summary.dump() << "\n";
    return report;
}

// ---------------------------------------------------------------------------
// Noise comparison: texture-adaptive speckle vs uniform speckle vs additive
// Gaussian, written side by side with per-variant ratio statistics.
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json run_noise_compare(const RunConfig& cfg,
                                                const std::string& input) {
    namespace fs = std::filesystem;
    GrayImage img = load_image(input);
    cfg.noise.validate();

    std::error_code ec;
    fs::create_directories(cfg.output_dir, ec);
    if (!fs::is_directory(cfg.output_dir))
        throw IoError("cannot create output directory: " + cfg.output_dir);
    std::string stem = fs::path(input).stem().string();
    Rng rng(cfg.seed);

    auto ratio_stats = [](const GrayImage& in, const GrayImage& out) {
        double sum = 0.0, sum2 = 0.0;
        long long n = 0;
        for (std::size_t i = 0; i < in.data.size(); ++i) {
            if (in.data[i] <= 0.0) continue;
            double r = out.data[i] / in.data[i];
            sum += r;
            sum2 += r * r;
            ++n;
        }
        double mean = n ? sum / n : 0.0;
        double var = n ? std::max(0.0, sum2 / n - mean * mean) : 0.0;
        return std::pair<double, double>{mean, std::sqrt(var)};
    };
    auto field_variance = [](const std::vector<double>& f) {
        double mean = 0.0;
        for (double v : f) mean += v;
        mean /= static_cast<double>(f.size());
        double var = 0.0;
        for (double v : f) var += (v - mean) * (v - mean);
        return var / static_cast<double>(f.size());
    };

    nlohmann::ordered_json out;

    // (1) texture-adaptive speckle
    auto [glcm_img, report] =
        generate_noise_view(img, cfg.noise, cfg.glcm, rng.fork(1));
    save_pgm(glcm_img, (fs::path(cfg.output_dir) / (stem + "__glcm.pgm")).string());
    {
        std::vector<double> field;
        for (const BlockRecord& b : report.blocks)
            field.push_back(b.sigma_prime);
        auto [mean, sd] = ratio_stats(img, glcm_img);
        out["glcm_speckle"] = {{"file", stem + "__glcm.pgm"},
                               {"ratio_mean", mean},
                               {"ratio_std", sd},
                               {"sigma_prime_variance", field_variance(field)}};
    }

    // (2) uniform speckle at sigma0
    {
        BlockGrid grid = make_block_grid(img.width, img.height, cfg.noise.block);
        std::vector<double> field(static_cast<std::size_t>(grid.cell_count()),
                                  cfg.noise.sigma0);
        GrayImage plain = inject_speckle(img, grid, field,
                                         cfg.noise.phase_sigma, rng.fork(2));
        save_pgm(plain,
                 (fs::path(cfg.output_dir) / (stem + "__plain.pgm")).string());
        auto [mean, sd] = ratio_stats(img, plain);
        out["plain_speckle"] = {{"file", stem + "__plain.pgm"},
                                {"ratio_mean", mean},
                                {"ratio_std", sd},
                                {"sigma_prime_variance", 0.0}};
    }

    // (3) additive Gaussian at sigma0
    {
        Rng g = rng.fork(3);
        GrayImage gauss(img.width, img.height);
        for (std::size_t i = 0; i < img.data.size(); ++i)
            gauss.data[i] = std::clamp(
                img.data[i] + g.normal(0.0, cfg.noise.sigma0), 0.0, 1.0);
        save_pgm(gauss,
                 (fs::path(cfg.output_dir) / (stem + "__gauss.pgm")).string());
        auto [mean, sd] = ratio_stats(img, gauss);
        out["gaussian"] = {{"file", stem + "__gauss.pgm"},
                           {"ratio_mean", mean},
                           {"ratio_std", sd}};
    }

    std::ofstream jf(fs::path(cfg.output_dir) / (stem + "__noise_compare.json"));
    if (!jf) throw IoError("cannot write noise compare report");
    jf << out.dump(2) << "\n";
    return out;
}

}  // namespace pcmsar
