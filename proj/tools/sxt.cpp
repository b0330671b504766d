// sxt: stereo X-ray feature location pipeline.
// Subcommands generate synthetic phantoms, forward-project them, detect
// point/line fiducials in the projections, match them across views, map
// them into 3D, and score the result against ground truth.

#include <chrono>
#include <cstdlib>
#include <functional>
#include <iomanip>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <openssl/evp.h>

#include "sxt/sxt.hpp"
#include "sxt/detail/parallel.hpp"

namespace fs = std::filesystem;
using namespace sxt;

namespace {

std::string g_stage = "startup";

std::string sha256_file(const std::string& path) {
    const std::string bytes = read_text(path);
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (!EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr))
        throw Error("sha256 failed for " + path);
    std::ostringstream hex;
    hex << std::hex << std::setfill('0');
    for (unsigned int i = 0; i < len; ++i) hex << std::setw(2) << static_cast<int>(digest[i]);
    return hex.str();
}

// --out is taken relative to $SXT_OUT_ROOT when that is set
std::string resolve_out(const std::string& out) {
    const char* root = std::getenv("SXT_OUT_ROOT");
    if (!root || fs::path(out).is_absolute()) return out;
    return (fs::path(root) / out).string();
}

std::vector<std::string> split_list(const std::string& csv) {
    std::vector<std::string> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::string meta_path_for(const std::string& raw_path) {
    fs::path p(raw_path);
    p.replace_extension(".json");
    return p.string();
}

FeatureMask load_mask(const std::string& pbm_path, const std::string& score_path = "") {
    FeatureMask mask = read_pbm(pbm_path);
    if (!score_path.empty()) {
        mask.score = read_raw_f32(score_path, mask.bits.size());
        // keep the mask invariant: bits came from score >= threshold
        float lo = 1.0f;
        for (std::size_t i = 0; i < mask.bits.size(); ++i)
            if (mask.bits[i]) lo = std::min(lo, mask.score[i]);
        mask.threshold = lo;
    }
    return mask;
}

struct StageTimer {
    std::map<std::string, double>& sink;
    std::string name;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    StageTimer(std::map<std::string, double>& s, std::string n) : sink(s), name(std::move(n)) {
        g_stage = name;
    }
    ~StageTimer() {
        sink[name] += std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                          .count();
    }
};

// ---------------------------------------------------------------------------
// phantom

int cmd_phantom(const std::string& out_dir, std::uint64_t seed, int grid_n, double voxel_size,
                int n_shapes, int n_points, int n_lines, double blur_sigma, int count,
                const std::string& levels_csv) {
    g_stage = "phantom";
    fs::create_directories(out_dir);
    PhantomRecipe base;
    base.seed = seed;
    base.grid = GridSpec::centered(grid_n, voxel_size);
    base.n_shapes = n_shapes;
    base.n_points = n_points;
    base.n_lines = n_lines;
    base.blur_sigma = blur_sigma;

    std::vector<double> levels;
    for (const auto& s : split_list(levels_csv)) levels.push_back(std::stod(s));
    if (levels.empty()) levels = {1.0};

    const Dataset ds = dataset(base, count, levels);
    ds.for_each([&](int i, int j, Dataset::Item item) {
        std::ostringstream tag;
        tag << std::setw(3) << std::setfill('0') << i << "_l" << j;
        const fs::path dir(out_dir);
        save_volume(item.volume, (dir / ("volume_" + tag.str() + ".raw")).string(),
                    (dir / ("volume_" + tag.str() + ".json")).string());
        write_json_file((dir / ("truth_" + tag.str() + ".json")).string(),
                        to_json(item.truth));
        write_json_file((dir / ("recipe_" + tag.str() + ".json")).string(),
                        to_json(item.recipe));
    });
    std::cout << "wrote " << ds.size() << " volumes to " << out_dir << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// project

int cmd_project(const std::string& volume_raw, const std::string& geometry_path, int view_index,
                bool all_views, const std::string& out_prefix, bool export_pgm) {
    g_stage = "project";
    const Volume3D vol = load_volume(volume_raw, meta_path_for(volume_raw));
    const StereoRig rig = rig_from_json(read_json_file(geometry_path));
    std::vector<int> views;
    if (all_views)
        for (std::size_t v = 0; v < rig.views.size(); ++v) views.push_back(static_cast<int>(v));
    else
        views.push_back(view_index);

    fs::create_directories(fs::path(out_prefix).parent_path());
    for (int v : views) {
        if (v < 0 || v >= static_cast<int>(rig.views.size()))
            throw InvalidArgument("view index outside rig");
        const ProjectionImage proj = forward_project(vol, rig.views[static_cast<std::size_t>(v)]);
        const std::string base = out_prefix + "_v" + std::to_string(v);
        save_projection(proj, v, base + ".raw", base + ".json");
        if (export_pgm) {
            const PgmWindow w = write_pgm16(base + ".pgm", proj.img);
            Json meta = read_json_file(base + ".json");
            meta["pgm_window"] = Json::array({w.lo, w.hi});
            write_json_file(base + ".json", meta);
        }
        std::cout << "projected view " << v << " -> " << base << ".raw\n";
    }
    return 0;
}

// ---------------------------------------------------------------------------
// detect

int cmd_detect(const std::string& in_raw, const std::string& params_path,
               const std::string& out_mask, const std::string& out_score, int block,
               int stride) {
    g_stage = "detect";
    const ImageF img = load_projection_image(in_raw, meta_path_for(in_raw));
    const DetectorParams params = params_path.empty()
                                      ? DetectorParams{}
                                      : detector_params_from_json(read_json_file(params_path));
    const FeatureMask mask =
        block > 0 ? detect_tiled(img, params, block, stride) : detect(img, params);
    write_pbm(out_mask, mask);
    if (!out_score.empty()) write_raw_f32(out_score, mask.score);
    std::cout << "mask " << out_mask << ": " << mask.count() << " pixels set\n";
    return 0;
}

// ---------------------------------------------------------------------------
// calibrate

int cmd_calibrate(const std::string& images_csv, const std::string& truths_csv,
                  const std::string& out_params) {
    g_stage = "calibrate";
    const auto images = split_list(images_csv);
    const auto truths = split_list(truths_csv);
    if (images.size() != truths.size())
        throw InvalidArgument("need one truth mask per training image");
    std::vector<TrainingPair> pairs;
    for (std::size_t i = 0; i < images.size(); ++i)
        pairs.push_back({load_projection_image(images[i], meta_path_for(images[i])),
                         read_pbm(truths[i])});
    const DetectorParams params = calibrate(pairs);
    write_json_file(out_params, to_json(params));
    std::cout << "calibrated params -> " << out_params << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// match

int cmd_match(const std::string& geometry_path, const std::string& masks_csv,
              const std::string& scores_csv, double tol_px, const std::string& out_matches,
              const std::string& out_candidates) {
    g_stage = "match";
    const StereoRig rig = rig_from_json(read_json_file(geometry_path));
    const auto mask_paths = split_list(masks_csv);
    const auto score_paths = split_list(scores_csv);
    if (mask_paths.size() != rig.views.size())
        throw GeometryMismatch("need one mask per rig view");

    std::vector<std::vector<FeatureCandidate>> cands;
    for (std::size_t v = 0; v < mask_paths.size(); ++v) {
        const FeatureMask mask =
            load_mask(mask_paths[v], v < score_paths.size() ? score_paths[v] : "");
        cands.push_back(extract_candidates(mask, MatcherParams{}, static_cast<int>(v)));
    }
    const auto matches = match_points(cands, rig, tol_px);
    const auto lines = match_lines(cands, rig, tol_px);

    Json jc = Json::array();
    for (const auto& per_view : cands) {
        Json jv = Json::array();
        for (const auto& c : per_view) jv.push_back(to_json(c));
        jc.push_back(jv);
    }
    if (!out_candidates.empty()) write_json_file(out_candidates, jc);

    Json jm = Json::array(), jl = Json::array();
    for (const auto& m : matches) jm.push_back(to_json(m));
    for (const auto& lm : lines.matches) jl.push_back(to_json(lm));
    write_json_file(out_matches,
                    Json{{"point_matches", jm},
                         {"line_matches", jl},
                         {"endpoint_count_mismatch", lines.endpoint_count_mismatch},
                         {"tol_px", tol_px}});
    std::cout << matches.size() << " point matches, " << lines.matches.size()
              << " line matches -> " << out_matches << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// map

int cmd_map(const std::string& geometry_path, const std::string& matches_path,
            const std::string& out_features, const std::string& masks_csv,
            double extract_threshold, const std::string& volume_out,
            const std::string& csv_out) {
    g_stage = "map";
    const StereoRig rig = rig_from_json(read_json_file(geometry_path));
    const Json jm = read_json_file(matches_path);

    std::vector<Feature3D> features;
    for (const Json& j : jm.at("point_matches")) {
        try {
            features.push_back(triangulate(match_from_json(j), rig));
        } catch (const ParallelRays&) {
            // degenerate geometry for this match; skip it
        }
    }
    for (const Json& j : jm.at("line_matches")) {
        try {
            features.push_back(reconstruct_line(line_match_from_json(j), rig));
        } catch (const AllSamplesDegenerate&) {
        }
    }

    if (!masks_csv.empty()) {
        const auto mask_paths = split_list(masks_csv);
        std::vector<FeatureMask> masks;
        for (const auto& p : mask_paths) masks.push_back(load_mask(p));
        VolumetricParams vp;
        vp.extract_threshold = extract_threshold;
        auto [vol, vfeatures] = volumetric_map(masks, rig, rig.world_grid, vp);
        for (auto& f : vfeatures) features.push_back(std::move(f));
        if (!volume_out.empty())
            save_volume(vol, volume_out, meta_path_for(volume_out));
    }

    Json out = Json::array();
    for (const auto& f : features) out.push_back(to_json(f, rig.world_grid));
    write_json_file(out_features, Json{{"features", out}});

    if (!csv_out.empty()) {
        std::ostringstream csv;
        csv << "feature,kind,vertex,x_mm,y_mm,z_mm\n";
        for (std::size_t i = 0; i < features.size(); ++i)
            for (std::size_t k = 0; k < features[i].positions.size(); ++k) {
                const Vec3& p = features[i].positions[k];
                csv << i << ","
                    << (features[i].kind == Feature3D::Kind::point ? "point" : "polyline")
                    << "," << k << "," << p.x << "," << p.y << "," << p.z << "\n";
            }
        write_text(csv_out, csv.str());
    }
    std::cout << features.size() << " features -> " << out_features << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// eval

int cmd_eval(const std::string& pred_path, const std::string& truth_path, double voxel_size,
             const std::string& pred_mask_path, const std::string& truth_mask_path,
             const std::string& score_path, const std::string& roi_csv,
             const std::string& out_json, const std::string& out_csv,
             const std::string& roc_csv) {
    g_stage = "eval";
    Json out;

    if (!pred_path.empty()) {
        const Json jf = read_json_file(pred_path);
        std::vector<Feature3D> pred;
        for (const Json& j : jf.at("features")) pred.push_back(feature_from_json(j));
        const FeatureSetTruth truth = truth_from_json(read_json_file(truth_path));
        const LocalizationReport report = localization_error(pred, truth, voxel_size);
        Json matched = Json::array();
        for (const auto& m : report.matched)
            matched.push_back(Json{{"pred", m.pred_index},
                                   {"truth", m.truth_index},
                                   {"error_voxels", m.error_voxels}});
        out["localization"] = Json{
            {"matched", matched},
            {"missed_truth", report.missed_truth},
            {"spurious_pred", report.spurious_pred},
            {"mean_error_voxels",
             report.mean_error_voxels ? Json(*report.mean_error_voxels) : Json()},
            {"max_error_voxels",
             report.max_error_voxels ? Json(*report.max_error_voxels) : Json()}};
    }

    if (!pred_mask_path.empty()) {
        const FeatureMask pred = read_pbm(pred_mask_path);
        const FeatureMask truth = read_pbm(truth_mask_path);
        std::optional<RoiBox> roi;
        if (!roi_csv.empty()) {
            const auto f = split_list(roi_csv);
            if (f.size() != 4) throw InvalidArgument("--roi wants u0,v0,u1,v1");
            roi = RoiBox{std::stoi(f[0]), std::stoi(f[1]), std::stoi(f[2]), std::stoi(f[3])};
        }
        const ConfusionCounts c = confusion(pred, truth, roi);
        Json jc{{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}};
        if (c.tpr()) jc["tpr"] = *c.tpr();
        if (c.fpr()) jc["fpr"] = *c.fpr();
        if (c.ppv()) jc["ppv"] = *c.ppv();
        if (c.for_()) jc["for"] = *c.for_();
        out["confusion"] = jc;

        if (!score_path.empty()) {
            ImageF score;
            score.n_u = pred.n_u;
            score.n_v = pred.n_v;
            score.data = read_raw_f32(score_path, pred.bits.size());
            const RocCurve curve = roc(score, truth, roi);
            out["roc"] = Json{{"auc", curve.auc}};
            if (!roc_csv.empty()) {
                std::ostringstream csv;
                csv << "threshold,fpr,tpr\n";
                for (const auto& p : curve.points)
                    csv << p.threshold << "," << p.fpr << "," << p.tpr << "\n";
                write_text(roc_csv, csv.str());
            }
        }
    }

    write_json_file(out_json, out);
    if (!out_csv.empty()) {
        std::ostringstream csv;
        csv << "metric,value\n";
        const std::function<void(const std::string&, const Json&)> walk =
            [&](const std::string& prefix, const Json& j) {
                if (j.is_object()) {
                    for (auto it = j.begin(); it != j.end(); ++it)
                        walk(prefix.empty() ? it.key() : prefix + "." + it.key(), it.value());
                } else if (j.is_number() || j.is_boolean()) {
                    csv << prefix << "," << j.dump() << "\n";
                }
            };
        walk("", out);
        write_text(out_csv, csv.str());
    }
    std::cout << "metrics -> " << out_json << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// pipeline

int cmd_pipeline(const std::string& config_path, const std::string& out_dir,
                 std::optional<std::uint64_t> seed_override, const std::string& scale_override) {
    g_stage = "pipeline:init";
    const Json cfg = read_json_file(config_path);
    fs::create_directories(out_dir);

    std::string scale = cfg.value("scale", "desk");
    if (!scale_override.empty()) scale = scale_override;
    const int grid_n = scale == "paper" ? 512 : 128;
    const int proj_n = scale == "paper" ? 1024 : 256;

    PhantomRecipe recipe;
    recipe.grid = GridSpec::centered(grid_n, 1.0);
    if (cfg.contains("recipe")) {
        Json jr = cfg.at("recipe");
        if (!jr.contains("grid")) jr["grid"] = to_json(recipe.grid);
        recipe = recipe_from_json(jr);
    }
    recipe.seed = seed_override ? *seed_override : cfg.value("seed", std::uint64_t{1});

    const int n_views = cfg.value("n_views", 2);
    StereoRig rig = cfg.contains("rig") ? rig_from_json(cfg.at("rig"))
                                        : default_rig(recipe.grid, n_views, proj_n, proj_n);

    DetectorParams det_params;
    if (cfg.contains("detector")) det_params = detector_params_from_json(cfg.at("detector"));
    // candidate proposal runs at a lower bar than the reported mask; the
    // epipolar constraint prunes the extra weak candidates downstream
    double extraction_threshold = det_params.threshold;
    MatcherParams matcher_params;
    double tol_px = 2.0;
    if (cfg.contains("matcher")) {
        tol_px = cfg.at("matcher").value("tol_px", 2.0);
        extraction_threshold =
            cfg.at("matcher").value("extraction_threshold", extraction_threshold);
        matcher_params.min_peak_score =
            cfg.at("matcher").value("min_peak_score", extraction_threshold * 1.3);
    } else {
        matcher_params.min_peak_score = extraction_threshold * 1.3;
    }
    VolumetricParams vol_params;
    bool run_volumetric = true;
    if (cfg.contains("mapper")) {
        vol_params.extract_threshold =
            cfg.at("mapper").value("extract_threshold", vol_params.extract_threshold);
        run_volumetric = cfg.at("mapper").value("volumetric", true);
    }
    const int n_volumes = cfg.value("n_test_volumes", 1);
    std::vector<double> levels = cfg.value("levels", std::vector<double>{1.0});

    std::map<std::string, double> timings;
    Json metrics = Json::array();
    std::vector<std::string> outputs;
    const fs::path dir(out_dir);

    {
        StageTimer t(timings, "pipeline:geometry");
        write_json_file((dir / "rig.json").string(), to_json(rig));
        outputs.push_back("rig.json");
    }

    const Dataset ds = dataset(recipe, n_volumes, levels);
    ds.for_each([&](int i, int j, Dataset::Item item) {
        std::ostringstream tag_s;
        tag_s << std::setw(3) << std::setfill('0') << i << "_l" << j;
        const std::string tag = tag_s.str();

        {
            StageTimer t(timings, "phantom");
            save_volume(item.volume, (dir / ("volume_" + tag + ".raw")).string(),
                        (dir / ("volume_" + tag + ".json")).string());
            write_json_file((dir / ("truth_" + tag + ".json")).string(), to_json(item.truth));
            outputs.push_back("volume_" + tag + ".raw");
            outputs.push_back("volume_" + tag + ".json");
            outputs.push_back("truth_" + tag + ".json");
        }

        std::vector<FeatureMask> masks;
        std::vector<std::vector<FeatureCandidate>> cands;
        for (std::size_t v = 0; v < rig.views.size(); ++v) {
            ProjectionImage proj;
            {
                StageTimer t(timings, "project");
                proj = forward_project(item.volume, rig.views[v]);
                const std::string base = "proj_" + tag + "_v" + std::to_string(v);
                save_projection(proj, static_cast<int>(v), (dir / (base + ".raw")).string(),
                                (dir / (base + ".json")).string());
                outputs.push_back(base + ".raw");
                outputs.push_back(base + ".json");
            }
            {
                StageTimer t(timings, "detect");
                const ImageF response = detect_response(proj.img, det_params);
                FeatureMask mask = finalize_response(response, det_params);
                const std::string base = "mask_" + tag + "_v" + std::to_string(v);
                write_pbm((dir / (base + ".pbm")).string(), mask);
                write_raw_f32((dir / (base + "_score.raw")).string(), mask.score);
                outputs.push_back(base + ".pbm");
                outputs.push_back(base + "_score.raw");
                DetectorParams loose = det_params;
                loose.threshold = extraction_threshold;
                cands.push_back(extract_candidates(finalize_response(response, loose),
                                                   matcher_params, static_cast<int>(v)));
                masks.push_back(std::move(mask));
            }
        }

        std::vector<Feature3D> features;
        bool endpoint_mismatch = false;
        {
            StageTimer t(timings, "match+triangulate");
            const auto point_matches = match_points(cands, rig, tol_px, matcher_params);
            const auto line_matches = match_lines(cands, rig, tol_px, matcher_params);
            endpoint_mismatch = line_matches.endpoint_count_mismatch;
            Json jm = Json::array(), jl = Json::array();
            for (const auto& m : point_matches) {
                jm.push_back(to_json(m));
                try {
                    features.push_back(triangulate(m, rig));
                } catch (const ParallelRays&) {
                }
            }
            for (const auto& lm : line_matches.matches) {
                jl.push_back(to_json(lm));
                try {
                    features.push_back(reconstruct_line(lm, rig));
                } catch (const AllSamplesDegenerate&) {
                }
            }
            write_json_file((dir / ("matches_" + tag + ".json")).string(),
                            Json{{"point_matches", jm},
                                 {"line_matches", jl},
                                 {"endpoint_count_mismatch", endpoint_mismatch},
                                 {"tol_px", tol_px}});
            outputs.push_back("matches_" + tag + ".json");
        }
        if (run_volumetric) {
            StageTimer t(timings, "volumetric_map");
            auto [vol, vfeatures] = volumetric_map(masks, rig, rig.world_grid, vol_params);
            for (auto& f : vfeatures) features.push_back(std::move(f));
            (void)vol;
        }
        {
            StageTimer t(timings, "map+eval");
            Json jf = Json::array();
            for (const auto& f : features) jf.push_back(to_json(f, rig.world_grid));
            write_json_file((dir / ("features_" + tag + ".json")).string(),
                            Json{{"features", jf}});
            outputs.push_back("features_" + tag + ".json");

            // clean triangulated features against truth; occluded stand-in
            // matches carry reduced confidence and are reported separately
            std::vector<Feature3D> triangulated;
            std::size_t n_occluded = 0;
            for (const auto& f : features) {
                if (f.source != Feature3D::Source::triangulated) continue;
                if (f.occlusion_flag) {
                    ++n_occluded;
                    continue;
                }
                triangulated.push_back(f);
            }
            const LocalizationReport rep =
                localization_error(triangulated, item.truth, recipe.grid.voxel_size);
            Json m{{"volume", i},
                   {"level", levels[static_cast<std::size_t>(j)]},
                   {"n_features", features.size()},
                   {"n_occluded", n_occluded},
                   {"endpoint_count_mismatch", endpoint_mismatch},
                   {"matched", rep.matched.size()},
                   {"missed", rep.missed_truth.size()},
                   {"spurious", rep.spurious_pred.size()}};
            m["mean_error_voxels"] =
                rep.mean_error_voxels ? Json(*rep.mean_error_voxels) : Json();
            metrics.push_back(m);
        }
    });

    g_stage = "pipeline:manifest";
    {
        std::ostringstream csv;
        csv << "volume,level,matched,missed,spurious,mean_error_voxels\n";
        for (const Json& m : metrics)
            csv << m.at("volume") << "," << m.at("level") << "," << m.at("matched") << ","
                << m.at("missed") << "," << m.at("spurious") << ","
                << m.at("mean_error_voxels").dump() << "\n";
        write_text((dir / "metrics.csv").string(), csv.str());
        outputs.push_back("metrics.csv");
    }

    Json manifest;
    manifest["config"] = cfg;
    manifest["seed"] = recipe.seed;
    manifest["scale"] = scale;
    Json jout = Json::object();
    std::sort(outputs.begin(), outputs.end());
    for (const auto& rel : outputs) {
        const std::string full = (dir / rel).string();
        jout[rel] = Json{{"sha256", sha256_file(full)},
                         {"bytes", fs::file_size(full)}};
    }
    manifest["outputs"] = jout;
    manifest["metrics"] = metrics;
    Json jt = Json::object();
    for (const auto& [k, v] : timings) jt[k] = v;
    manifest["timings"] = jt;  // excluded from determinism comparisons
    write_json_file((dir / "manifest.json").string(), manifest);
    std::cout << "pipeline complete: " << out_dir << "/manifest.json\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"stereo X-ray point/line fiducial location pipeline"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "cap worker threads (0 = hardware)");

    // phantom
    auto* p_phantom = app.add_subcommand("phantom", "generate synthetic volumes");
    std::string out_dir = "phantom_out";
    std::uint64_t seed = 1;
    int grid_n = 128, n_shapes = 10, n_points = 3, n_lines = 1, count = 1;
    double voxel_size = 1.0, blur_sigma = 1.0;
    std::string levels_csv = "1.0";
    p_phantom->add_option("--out", out_dir)->required();
    p_phantom->add_option("--seed", seed);
    p_phantom->add_option("--grid", grid_n);
    p_phantom->add_option("--voxel-size", voxel_size);
    p_phantom->add_option("--n-shapes", n_shapes);
    p_phantom->add_option("--n-points", n_points);
    p_phantom->add_option("--n-lines", n_lines);
    p_phantom->add_option("--blur", blur_sigma);
    p_phantom->add_option("--count", count);
    p_phantom->add_option("--levels", levels_csv, "comma-separated intensity scales");

    // project
    auto* p_project = app.add_subcommand("project", "forward-project a volume");
    std::string volume_raw, geometry_path, out_prefix;
    int view_index = 0;
    bool all_views = false, export_pgm = false;
    p_project->add_option("--volume", volume_raw)->required();
    p_project->add_option("--geometry", geometry_path)->required();
    p_project->add_option("--view", view_index);
    p_project->add_flag("--all-views", all_views);
    p_project->add_option("--out", out_prefix)->required();
    p_project->add_flag("--pgm", export_pgm);

    // detect
    auto* p_detect = app.add_subcommand("detect", "find features in a projection");
    std::string in_raw, params_path, out_mask, out_score;
    int block = 0, stride = 0;
    p_detect->add_option("--in", in_raw)->required();
    p_detect->add_option("--params", params_path);
    p_detect->add_option("--out", out_mask)->required();
    p_detect->add_option("--score", out_score);
    p_detect->add_option("--block", block, "tile into blocks of this size");
    p_detect->add_option("--stride", stride);

    // calibrate
    auto* p_cal = app.add_subcommand("calibrate", "grid-search detector parameters");
    std::string images_csv, truths_csv, out_params;
    p_cal->add_option("--images", images_csv)->required();
    p_cal->add_option("--truths", truths_csv)->required();
    p_cal->add_option("--out", out_params)->required();

    // match
    auto* p_match = app.add_subcommand("match", "epipolar candidate matching");
    std::string masks_csv, scores_csv, out_matches, out_candidates;
    double tol_px = 2.0;
    p_match->add_option("--geometry", geometry_path)->required();
    p_match->add_option("--masks", masks_csv)->required();
    p_match->add_option("--scores", scores_csv);
    p_match->add_option("--tol", tol_px);
    p_match->add_option("--out", out_matches)->required();
    p_match->add_option("--candidates", out_candidates);

    // map
    auto* p_map = app.add_subcommand("map", "map matches into 3D");
    std::string matches_path, out_features, volume_out, csv_out;
    double extract_threshold = 0.5;
    p_map->add_option("--geometry", geometry_path)->required();
    p_map->add_option("--matches", matches_path)->required();
    p_map->add_option("--out", out_features)->required();
    p_map->add_option("--masks", masks_csv, "also run the volumetric pathway on these masks");
    p_map->add_option("--threshold", extract_threshold);
    p_map->add_option("--volume-out", volume_out);
    p_map->add_option("--csv", csv_out);

    // eval
    auto* p_eval = app.add_subcommand("eval", "score predictions against truth");
    std::string pred_path, truth_path, pred_mask_path, truth_mask_path, score_path, roi_csv,
        out_json, out_csv, roc_csv;
    double eval_voxel = 1.0;
    p_eval->add_option("--pred", pred_path);
    p_eval->add_option("--truth", truth_path);
    p_eval->add_option("--voxel-size", eval_voxel);
    p_eval->add_option("--pred-mask", pred_mask_path);
    p_eval->add_option("--truth-mask", truth_mask_path);
    p_eval->add_option("--score", score_path);
    p_eval->add_option("--roi", roi_csv, "u0,v0,u1,v1");
    p_eval->add_option("--out", out_json)->required();
    p_eval->add_option("--csv", out_csv);
    p_eval->add_option("--roc", roc_csv);

    // pipeline
    auto* p_pipe = app.add_subcommand("pipeline", "run all stages end to end");
    std::string config_path, pipe_out, scale_override;
    std::uint64_t pipe_seed = 0;
    bool seed_set = false;
    p_pipe->add_option("--config", config_path)->required();
    p_pipe->add_option("--out", pipe_out)->required();
    auto* seed_opt = p_pipe->add_option("--seed", pipe_seed);
    p_pipe->add_option("--scale", scale_override)->check(CLI::IsMember({"desk", "paper"}));

    CLI11_PARSE(app, argc, argv);
    parallel::set_max_threads(threads);
    seed_set = seed_opt->count() > 0;

    try {
        if (*p_phantom)
            return cmd_phantom(resolve_out(out_dir), seed, grid_n, voxel_size, n_shapes,
                               n_points, n_lines, blur_sigma, count, levels_csv);
        if (*p_project)
            return cmd_project(volume_raw, geometry_path, view_index, all_views,
                               resolve_out(out_prefix), export_pgm);
        if (*p_detect)
            return cmd_detect(in_raw, params_path, resolve_out(out_mask),
                              out_score.empty() ? out_score : resolve_out(out_score), block,
                              stride);
        if (*p_cal) return cmd_calibrate(images_csv, truths_csv, resolve_out(out_params));
        if (*p_match)
            return cmd_match(geometry_path, masks_csv, scores_csv, tol_px,
                             resolve_out(out_matches),
                             out_candidates.empty() ? out_candidates
                                                    : resolve_out(out_candidates));
        if (*p_map)
            return cmd_map(geometry_path, matches_path, resolve_out(out_features), masks_csv,
                           extract_threshold,
                           volume_out.empty() ? volume_out : resolve_out(volume_out),
                           csv_out.empty() ? csv_out : resolve_out(csv_out));
        if (*p_eval)
            return cmd_eval(pred_path, truth_path, eval_voxel, pred_mask_path, truth_mask_path,
                            score_path, roi_csv, resolve_out(out_json), out_csv, roc_csv);
        if (*p_pipe)
            return cmd_pipeline(config_path, resolve_out(pipe_out),
                                seed_set ? std::optional<std::uint64_t>(pipe_seed)
                                         : std::nullopt,
                                scale_override);
    } catch (const std::exception& e) {
        const Json err{{"error", {{"stage", g_stage}, {"message", e.what()}}}};
        std::cerr << err.dump() << "\n";
        return 1;
    }
    return 2;
}
