// Exercises the command-line pipeline stage by stage against direct library
// calls. Needs the binary path in SXT_CLI_BIN (set by ctest); the suite
// skips cleanly when it is absent.
#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "sxt/sxt.hpp"

namespace fs = std::filesystem;
using namespace sxt;

namespace {

std::string cli_bin() {
    const char* p = std::getenv("SXT_CLI_BIN");
    return p ? p : "";
}

int run(const std::string& args) {
    const std::string cmd = cli_bin() + " " + args + " > /dev/null 2>&1";
    return std::system(cmd.c_str());
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("sxt_cli_test_" + std::to_string(std::rand()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("cli stages reproduce library results") {
    if (cli_bin().empty()) {
        SUCCEED("SXT_CLI_BIN not set; CLI test skipped");
        return;
    }
    TempDir tmp;

    // phantom via CLI, then reload and compare against the library
    REQUIRE(run("phantom --out " + (tmp / "ph") + " --seed 9 --grid 48 --count 1") == 0);
    PhantomRecipe recipe;
    recipe.seed = detail::splitmix64(9);  // dataset derives per-volume seeds
    recipe.grid = GridSpec::centered(48, 1.0);
    const auto [want_vol, want_truth] = generate_phantom(recipe);
    const Volume3D got_vol =
        load_volume(tmp / "ph/volume_000_l0.raw", tmp / "ph/volume_000_l0.json");
    REQUIRE(got_vol.data == want_vol.data);
    const FeatureSetTruth got_truth =
        truth_from_json(read_json_file(tmp / "ph/truth_000_l0.json"));
    REQUIRE(got_truth.points.size() == want_truth.points.size());

    // geometry file
    const StereoRig rig = default_rig(recipe.grid, 2, 96, 96);
    write_json_file(tmp / "rig.json", to_json(rig));

    // project via CLI equals forward_project
    REQUIRE(run("project --volume " + (tmp / "ph/volume_000_l0.raw") + " --geometry " +
                (tmp / "rig.json") + " --all-views --out " + (tmp / "proj")) == 0);
    const ProjectionImage want_proj = forward_project(want_vol, rig.views[0]);
    int view_id = -1;
    const ImageF got_proj =
        load_projection_image(tmp / "proj_v0.raw", tmp / "proj_v0.json", &view_id);
    REQUIRE(view_id == 0);
    REQUIRE(got_proj.data == want_proj.img.data);

    // detect via CLI equals detect()
    REQUIRE(run("detect --in " + (tmp / "proj_v0.raw") + " --out " + (tmp / "mask_v0.pbm") +
                " --score " + (tmp / "score_v0.raw")) == 0);
    REQUIRE(run("detect --in " + (tmp / "proj_v1.raw") + " --out " + (tmp / "mask_v1.pbm") +
                " --score " + (tmp / "score_v1.raw")) == 0);
    const FeatureMask want_mask = detect(want_proj.img, DetectorParams{});
    const FeatureMask got_mask = read_pbm(tmp / "mask_v0.pbm");
    REQUIRE(got_mask.bits == want_mask.bits);

    // match + map via CLI produce a features file the eval stage accepts
    REQUIRE(run("match --geometry " + (tmp / "rig.json") + " --masks " + (tmp / "mask_v0.pbm") +
                "," + (tmp / "mask_v1.pbm") + " --scores " + (tmp / "score_v0.raw") + "," +
                (tmp / "score_v1.raw") + " --tol 2.0 --out " + (tmp / "matches.json") +
                " --candidates " + (tmp / "cands.json")) == 0);
    REQUIRE(run("map --geometry " + (tmp / "rig.json") + " --matches " + (tmp / "matches.json") +
                " --out " + (tmp / "features.json")) == 0);
    REQUIRE(run("eval --pred " + (tmp / "features.json") + " --truth " +
                (tmp / "ph/truth_000_l0.json") + " --voxel-size 1.0 --out " +
                (tmp / "metrics.json") + " --csv " + (tmp / "metrics.csv")) == 0);

    // eval wrapper equivalence: the CLI's mean matches the library call
    const Json jf = read_json_file(tmp / "features.json");
    std::vector<Feature3D> pred;
    for (const Json& j : jf.at("features")) pred.push_back(feature_from_json(j));
    const LocalizationReport want_rep = localization_error(pred, got_truth, 1.0);
    const Json metrics = read_json_file(tmp / "metrics.json");
    if (want_rep.mean_error_voxels) {
        REQUIRE(metrics.at("localization").at("mean_error_voxels").get<double>() ==
                Catch::Approx(*want_rep.mean_error_voxels).margin(1e-12));
    } else {
        REQUIRE(metrics.at("localization").at("mean_error_voxels").is_null());
    }

    // mask-level eval with ROC output
    const FeatureMask truth_mask = render_truth_mask(rig.views[0], got_truth, 0.0);
    write_pbm(tmp / "truth_v0.pbm", truth_mask);
    REQUIRE(run("eval --pred-mask " + (tmp / "mask_v0.pbm") + " --truth-mask " +
                (tmp / "truth_v0.pbm") + " --score " + (tmp / "score_v0.raw") + " --out " +
                (tmp / "mask_metrics.json") + " --roc " + (tmp / "roc.csv")) == 0);
    const Json mm = read_json_file(tmp / "mask_metrics.json");
    const ConfusionCounts want_cc = confusion(got_mask, truth_mask);
    REQUIRE(mm.at("confusion").at("tp").get<std::uint64_t>() == want_cc.tp);
    REQUIRE(fs::exists(tmp / "roc.csv"));
}

TEST_CASE("cli calibrate round-trips detector params") {
    if (cli_bin().empty()) {
        SUCCEED("SXT_CLI_BIN not set; CLI test skipped");
        return;
    }
    TempDir tmp;
    // single training pair with an empty truth: calibration must pick the
    // most conservative threshold
    ImageF img = ImageF::zeros(48, 48);
    img.at(24, 24) = 5.0f;
    ProjectionImage proj;
    proj.view = default_rig(GridSpec::centered(48, 1.0), 2, 48, 48).views[0];
    proj.img = img;
    save_projection(proj, 0, tmp / "train.raw", tmp / "train.json");
    write_pbm(tmp / "truth.pbm", FeatureMask::zeros(48, 48));
    REQUIRE(run("calibrate --images " + (tmp / "train.raw") + " --truths " +
                (tmp / "truth.pbm") + " --out " + (tmp / "params.json")) == 0);
    const DetectorParams p = detector_params_from_json(read_json_file(tmp / "params.json"));
    REQUIRE(p.threshold == 0.8);
}

TEST_CASE("cli reports machine-readable errors") {
    if (cli_bin().empty()) {
        SUCCEED("SXT_CLI_BIN not set; CLI test skipped");
        return;
    }
    TempDir tmp;
    const std::string cmd = cli_bin() + " project --volume " + (tmp / "missing.raw") +
                            " --geometry " + (tmp / "missing.json") + " --out " + (tmp / "x") +
                            " 2> " + (tmp / "err.json");
    REQUIRE(std::system(cmd.c_str()) != 0);
    const Json err = read_json_file(tmp / "err.json");
    REQUIRE(err.contains("error"));
    REQUIRE(err.at("error").contains("stage"));
    REQUIRE(err.at("error").contains("message"));
}

TEST_CASE("serialization round trips") {
    const StereoRig rig = default_rig(GridSpec::centered(32, 0.5), 3, 64, 48);
    const StereoRig rig2 = rig_from_json(to_json(rig));
    REQUIRE(rig2.views.size() == 3);
    REQUIRE(rig2.views[2].source.x == Catch::Approx(rig.views[2].source.x));
    REQUIRE(rig2.world_grid.voxel_size == 0.5);

    FeatureSetTruth truth;
    truth.points.push_back({{1.0, -2.0, 3.0}, 1.5, 9.0});
    truth.lines.push_back({{0, 0, 0}, {5, 5, 5}, 2.0, 8.0});
    const FeatureSetTruth t2 = truth_from_json(to_json(truth));
    REQUIRE(t2.points[0].center.y == -2.0);
    REQUIRE(t2.lines[0].thickness == 2.0);

    Feature3D f;
    f.kind = Feature3D::Kind::polyline;
    f.positions = {{0, 0, 0}, {1, 2, 3}};
    f.residual_gap = 0.25;
    f.occlusion_flag = true;
    const Feature3D f2 = feature_from_json(to_json(f, rig.world_grid));
    REQUIRE(f2.kind == Feature3D::Kind::polyline);
    REQUIRE(f2.positions.size() == 2);
    REQUIRE(f2.occlusion_flag);

    // PBM round trip at a non-multiple-of-8 width
    FeatureMask mask = FeatureMask::zeros(13, 7);
    mask.bits[mask.index(0, 0)] = 1;
    mask.bits[mask.index(12, 6)] = 1;
    mask.bits[mask.index(5, 3)] = 1;
    const fs::path p = fs::temp_directory_path() / "sxt_pbm_test.pbm";
    write_pbm(p.string(), mask);
    const FeatureMask mask2 = read_pbm(p.string());
    fs::remove(p);
    REQUIRE(mask2.n_u == 13);
    REQUIRE(mask2.bits == mask.bits);
}
