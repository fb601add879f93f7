#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <set>

#include "vesseg/data.hpp"
#include "vesseg/image_io.hpp"

using namespace vesseg;
using namespace vesseg::data;
namespace fs = std::filesystem;

namespace {
struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

// 8-connected component count of the foreground
int component_count(const metrics::BinaryMask& m) {
    std::vector<int> label(m.values.size(), 0);
    int components = 0;
    std::vector<index_t> stack;
    for (index_t start = 0; start < m.h * m.w; ++start) {
        if (!m.values[static_cast<size_t>(start)] || label[static_cast<size_t>(start)]) continue;
        ++components;
        stack.push_back(start);
        label[static_cast<size_t>(start)] = components;
        while (!stack.empty()) {
            const index_t cur = stack.back();
            stack.pop_back();
            const index_t r = cur / m.w, c = cur % m.w;
            for (index_t dr = -1; dr <= 1; ++dr)
                for (index_t dc = -1; dc <= 1; ++dc) {
                    const index_t rr = r + dr, cc = c + dc;
                    if (rr < 0 || rr >= m.h || cc < 0 || cc >= m.w) continue;
                    const index_t i = rr * m.w + cc;
                    if (m.values[static_cast<size_t>(i)] && !label[static_cast<size_t>(i)]) {
                        label[static_cast<size_t>(i)] = components;
                        stack.push_back(i);
                    }
                }
        }
    }
    return components;
}
}  // namespace

TEST_CASE("synthetic generation is deterministic") {
    auto a = generate_synthetic(8, 64, 7);
    auto b = generate_synthetic(8, 64, 7);
    REQUIRE(a.size() == 8);
    for (size_t i = 0; i < 8; ++i) {
        CHECK(a[i].case_id == b[i].case_id);
        CHECK(a[i].mask.values == b[i].mask.values);
        CHECK(a[i].image.data == b[i].image.data);
    }
    auto c = generate_synthetic(8, 64, 8);
    CHECK(a[0].mask.values != c[0].mask.values);  // seed matters

    CHECK_THROWS_AS(generate_synthetic(4, 16, 1), ConfigError);  // size >= 32
}

TEST_CASE("synthetic masks: nonempty connected trees with bounded foreground") {
    auto samples = generate_synthetic(1000, 64, 1234);
    for (const ImageSample& s : samples) {
        const double frac = foreground_fraction(s.mask);
        CHECK(frac >= 0.005);
        CHECK(frac <= 0.15);
        CHECK(component_count(s.mask) == 1);  // one connected vascular tree
        for (double v : s.image.data) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("augment: identity config leaves the sample unchanged") {
    auto samples = generate_synthetic(1, 64, 3);
    Rng rng(5);
    ImageSample out = augment(samples[0], AugmentationConfig::identity(), rng);
    CHECK(out.image.data == samples[0].image.data);
    CHECK(out.mask.values == samples[0].mask.values);
}

TEST_CASE("augment: 90 degree rotation turns a horizontal line vertical") {
    ImageSample s;
    s.case_id = s.group_id = "line";
    s.image = Tensor::zeros({1, 9, 9});
    s.mask = metrics::BinaryMask(9, 9);
    for (index_t c = 1; c <= 7; ++c) {
        s.mask.at(4, c) = 1;
        s.image.data[4 * 9 + c] = 1.0;
    }

    AugmentationConfig cfg = AugmentationConfig::identity();
    cfg.rotation_deg = {90.0, 90.0};
    Rng rng(6);
    ImageSample out = augment(s, cfg, rng);

    metrics::BinaryMask expected(9, 9);
    for (index_t r = 1; r <= 7; ++r) expected.at(r, 4) = 1;
    CHECK(out.mask.values == expected.values);
}

TEST_CASE("augment: masks stay binary and images stay in range") {
    auto samples = generate_synthetic(4, 64, 11);
    AugmentationConfig cfg;  // full default ranges
    Rng rng(12);
    for (int trial = 0; trial < 1000; ++trial) {
        const ImageSample& src = samples[static_cast<size_t>(trial % 4)];
        ImageSample out = augment(src, cfg, rng);
        CHECK_NOTHROW(out.mask.validate());
        double lo = 1e9, hi = -1e9;
        for (double v : out.image.data) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        CHECK(lo >= 0.0);
        CHECK(hi <= 1.0);
    }
}

TEST_CASE("fold splitting partitions cases exactly") {
    auto samples = generate_synthetic(20, 32, 21);
    auto folds = make_folds(samples, 5, 99);
    REQUIRE(folds.size() == 5);

    std::set<std::string> seen;
    for (const FoldSplit& f : folds) {
        CHECK(f.val_ids.size() == 4);
        CHECK(f.train_ids.size() == 16);
        for (const std::string& id : f.val_ids) {
            CHECK(seen.insert(id).second);  // each case validates exactly once
            CHECK(std::find(f.train_ids.begin(), f.train_ids.end(), id) == f.train_ids.end());
        }
    }
    CHECK(seen.size() == 20);

    auto folds2 = make_folds(samples, 5, 99);
    for (size_t i = 0; i < folds.size(); ++i) {
        CHECK(folds[i].val_ids == folds2[i].val_ids);
        CHECK(folds[i].train_ids == folds2[i].train_ids);
    }

    CHECK_THROWS_AS(make_folds(samples, 1, 0), ConfigError);
    auto one = generate_synthetic(1, 32, 5);
    CHECK_THROWS_AS(make_folds(one, 2, 0), ConfigError);
}

TEST_CASE("fold splitting never splits a group") {
    auto samples = generate_synthetic(20, 32, 22);
    // 4 patients, 5 slices each
    for (size_t i = 0; i < samples.size(); ++i) samples[i].group_id = "patient" + std::to_string(i / 5);
    auto folds = make_folds(samples, 2, 7);
    for (const FoldSplit& f : folds) {
        std::set<std::string> val_groups, train_groups;
        for (const std::string& id : f.val_ids)
            for (const ImageSample& s : samples)
                if (s.case_id == id) val_groups.insert(s.group_id);
        for (const std::string& id : f.train_ids)
            for (const ImageSample& s : samples)
                if (s.case_id == id) train_groups.insert(s.group_id);
        for (const std::string& g : val_groups) CHECK(train_groups.count(g) == 0);
    }
}

TEST_CASE("synthetic dataset round-trips through PNG files") {
    TempDir dir("vesseg_synth_test");
    auto written = write_synthetic_dataset(dir.path.string(), 6, 64, 42);
    CHECK(fs::exists(dir.path / "manifest.csv"));

    auto loaded = load_png_dir(dir.path.string(), 1);
    REQUIRE(loaded.size() == 6);
    for (size_t i = 0; i < 6; ++i) {
        CHECK(loaded[i].case_id == written[i].case_id);
        CHECK(loaded[i].mask.values == written[i].mask.values);  // masks are exact
        double max_err = 0.0;
        for (index_t j = 0; j < loaded[i].image.numel(); ++j)
            max_err = std::max(max_err, std::abs(loaded[i].image.data[j] - written[i].image.data[j]));
        CHECK(max_err <= 0.5 / 255.0 + 1e-12);  // 8-bit quantization only
    }
}

TEST_CASE("drive loader: pairing, resize, orphan detection") {
    TempDir dir("vesseg_drive_test");
    fs::create_directories(dir.path / "images");
    fs::create_directories(dir.path / "masks");

    // two DRIVE-sized cases with numeric-prefix naming
    Rng rng(31);
    for (int k : {21, 22}) {
        Tensor img({3, 584, 565});
        for (double& v : img.data) v = rng.uniform();
        io::write_rgb_png((dir.path / "images" / (std::to_string(k) + "_training.png")).string(), img);
        metrics::BinaryMask m(584, 565);
        for (index_t r = 100; r < 300; ++r) m.at(r, 200) = 1;
        io::write_mask_png((dir.path / "masks" / (std::to_string(k) + "_manual1.png")).string(), m);
    }

    auto samples = load_drive(dir.path.string());
    REQUIRE(samples.size() == 2);
    CHECK(samples[0].case_id == "21");
    CHECK(samples[1].case_id == "22");
    for (const ImageSample& s : samples) {
        CHECK(s.image.shape == std::vector<index_t>{3, 512, 512});
        CHECK(s.mask.h == 512);
        CHECK(s.mask.w == 512);
        CHECK(s.mask.foreground_count() > 0);
    }

    auto again = load_drive(dir.path.string());
    CHECK(again[0].image.data == samples[0].image.data);  // deterministic re-run

    // an image without a mask is an ingestion error naming the orphan
    io::write_rgb_png((dir.path / "images" / "23_training.png").string(), Tensor::zeros({3, 64, 64}));
    CHECK_THROWS_AS(load_drive(dir.path.string()), IngestionError);

    TempDir empty("vesseg_drive_empty");
    CHECK(load_drive(empty.path.string()).empty());
}

TEST_CASE("ircadb loader: windowing, bounding box, per-patient grouping") {
    TempDir dir("vesseg_ircadb_test");
    const fs::path p1 = dir.path / "patient_01";
    fs::create_directories(p1 / "slices");
    fs::create_directories(p1 / "liver");
    fs::create_directories(p1 / "vessels");

    // liver box chosen so crop+pad is exactly 256x256 (resize is then identity)
    const index_t H = 300, W = 300;
    Tensor raw({H, W});
    for (double& v : raw.data) v = 1024.0 - 500.0;  // air-ish background
    metrics::BinaryMask liver(H, W), vessels(H, W);
    for (index_t r = 20; r < 20 + 240; ++r)
        for (index_t c = 30; c < 30 + 240; ++c) liver.at(r, c) = 1;
    // crop starts at (12, 22); mark window endpoints inside the crop
    raw.data[40 * W + 50] = 1024.0 - 100.0;  // -100 HU -> 0.0
    raw.data[40 * W + 51] = 1024.0 + 400.0;  // +400 HU -> 1.0
    raw.data[40 * W + 52] = 1024.0 + 150.0;  // +150 HU -> 0.5
    vessels.at(60, 60) = 1;

    io::write_gray16_png((p1 / "slices" / "s000.png").string(), raw);
    io::write_mask_png((p1 / "liver" / "s000.png").string(), liver);
    io::write_mask_png((p1 / "vessels" / "s000.png").string(), vessels);

    // a slice with an empty liver label is skipped, as is one missing labels
    io::write_gray16_png((p1 / "slices" / "s001.png").string(), raw);
    io::write_mask_png((p1 / "liver" / "s001.png").string(), metrics::BinaryMask(H, W));
    io::write_mask_png((p1 / "vessels" / "s001.png").string(), vessels);
    io::write_gray16_png((p1 / "slices" / "s002.png").string(), raw);

    auto samples = load_ircadb_slices(dir.path.string());
    REQUIRE(samples.size() == 1);
    const ImageSample& s = samples[0];
    CHECK(s.case_id == "patient_01_s000");
    CHECK(s.group_id == "patient_01");
    CHECK(s.image.shape == std::vector<index_t>{1, 256, 256});
    CHECK(s.mask.foreground_count() == 1);

    // crop origin is (12, 22): raw (40, 50) lands at (28, 28)
    CHECK(s.image.data[28 * 256 + 28] == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(s.image.data[28 * 256 + 29] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(s.image.data[28 * 256 + 30] == doctest::Approx(0.5).epsilon(1e-3));
    CHECK(s.mask.at(48, 38) == 1);  // vessel pixel (60,60) relative to crop origin
}
