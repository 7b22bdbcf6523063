#include <gtest/gtest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "sos/coco_io.hpp"
#include "sos/image_io.hpp"
#include "sos/prior_map_io.hpp"
#include "support.hpp"

using namespace sos;
using nlohmann::json;
using testing_support::Gen;
using testing_support::mask_of;
using testing_support::record;
using testing_support::rect;

namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = SOS_FIXTURES;

class TempDir {
public:
    TempDir() {
        path_ = fs::temp_directory_path() / ("sos_io_" + std::to_string(::getpid()) + "_" + std::to_string(counter_++));
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }

private:
    static inline int counter_ = 0;
    fs::path path_;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary);
    out << bytes;
}

json one_image_doc(json segmentation) {
    return {{"images", {{{"id", 1}, {"file_name", "x.png"}, {"height", 20}, {"width", 20}}}},
            {"annotations", {{{"id", 1}, {"image_id", 1}, {"segmentation", std::move(segmentation)}}}}};
}

}  // namespace

TEST(LoadAnnotations, MinimalFixture) {
    const auto set = io::load_annotations(kFixtures / "minimal_coco.json");
    ASSERT_EQ(set.images.size(), 1u);
    EXPECT_EQ(set.images.at(7), (ImageInfo{"tiny.png", 3, 4}));
    ASSERT_EQ(set.annotations.size(), 1u);
    const auto& a = set.annotations[0];
    EXPECT_EQ(a.id, 1);
    EXPECT_EQ(a.image_id, 7);
    EXPECT_EQ(a.category_id, 2);
    EXPECT_EQ(a.mask, mask_of(3, 4, {{1, 0}, {1, 1}}));
    EXPECT_EQ(a.source, AnnotationSource::original);
    EXPECT_DOUBLE_EQ(a.score, 1.0);
    EXPECT_EQ(a.extra, (json{{"iscrowd", 0}, {"note", "kept"}}));
}

TEST(LoadAnnotations, EmptyAnnotationList) {
    const json doc{{"images", {{{"id", 1}, {"file_name", "x.png"}, {"height", 2}, {"width", 2}}}}, {"annotations", json::array()}};
    EXPECT_TRUE(io::annotation_set_from_json(doc).annotations.empty());
}

TEST(LoadAnnotations, RleSizeMismatch) {
    try {
        io::annotation_set_from_json(one_image_doc({{"size", {10, 10}}, {"counts", {100}}}));
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("$.annotations[0].segmentation.size"), std::string::npos) << e.what();
    }
}

TEST(LoadAnnotations, SchemaErrorsCarryJsonPath) {
    const auto expect_path = [](const json& doc, const std::string& path) {
        try {
            io::annotation_set_from_json(doc);
            ADD_FAILURE() << "no error for " << path;
        } catch (const ParseError& e) {
            EXPECT_NE(std::string(e.what()).find(path), std::string::npos) << e.what();
        }
    };
    expect_path(json::object(), "$");
    auto dangling = one_image_doc({{"size", {20, 20}}, {"counts", {400}}});
    dangling["annotations"][0]["image_id"] = 2;
    expect_path(dangling, "$.annotations[0].image_id");
    expect_path(one_image_doc({{"size", {20, 20}}, {"counts", {300}}}), "$.annotations[0].segmentation.counts");
    expect_path(one_image_doc({{"size", {20, 20}}, {"counts", "abc"}}), "$.annotations[0].segmentation.counts");
    auto dup = one_image_doc({{"size", {20, 20}}, {"counts", {400}}});
    dup["annotations"].push_back(dup["annotations"][0]);
    expect_path(dup, "$.annotations[1].id");
    auto bad_score = one_image_doc({{"size", {20, 20}}, {"counts", {400}}});
    bad_score["annotations"][0]["score"] = 1.5;
    expect_path(bad_score, "$.annotations[0].score");
    auto bad_image = one_image_doc({{"size", {20, 20}}, {"counts", {400}}});
    bad_image["images"][0]["height"] = 0;
    expect_path(bad_image, "$.images[0]");
}

TEST(LoadAnnotations, MissingFileAndBadJson) {
    TempDir dir;
    EXPECT_THROW(io::load_annotations(dir.path() / "none.json"), ParseError);
    spit(dir.path() / "bad.json", "{not json");
    EXPECT_THROW(io::load_annotations(dir.path() / "bad.json"), ParseError);
}

TEST(LoadAnnotations, PolygonsRasterizeAtPixelCenters) {
    const auto set = io::annotation_set_from_json(one_image_doc(json::array({{2, 3, 6, 3, 6, 7, 2, 7}})));
    EXPECT_EQ(set.annotations[0].mask, rect(20, 20, 2, 3, 6, 7));
    EXPECT_THROW(io::annotation_set_from_json(one_image_doc(json::array({{2, 3, 6}}))), ParseError);
}

TEST(SaveAnnotations, SourceTagUnderVendorKey) {
    AnnotationSet set;
    set.images[1] = {"a.png", 4, 4};
    set.annotations = {record(1, 1, rect(4, 4, 0, 0, 2, 2)),
                       record(2, 1, rect(4, 4, 2, 2, 4, 4), AnnotationSource::pseudo, 0.93)};
    const auto j = io::annotation_set_to_json(set);
    EXPECT_EQ(j["annotations"][0]["sos_source"], "original");
    EXPECT_EQ(j["annotations"][1]["sos_source"], "pseudo");
    EXPECT_EQ(j["annotations"][1]["segmentation"], (json{{"size", {4, 4}}, {"counts", {10, 2, 2, 2}}}));
    EXPECT_EQ(j["annotations"][1]["bbox"], (json{2, 2, 2, 2}));
    EXPECT_EQ(j["annotations"][1]["area"], 4);
}

TEST(SaveAnnotations, EmptySetSkeleton) {
    const auto j = json::parse(io::dump_annotations(AnnotationSet{}));
    EXPECT_EQ(j, (json{{"images", json::array()}, {"annotations", json::array()}, {"categories", json::array()}}));
}

TEST(SaveAnnotations, RoundTripProperty) {
    Gen gen(81);
    TempDir dir;
    for (int i = 0; i < 30; ++i) {
        AnnotationSet set;
        const int n_img = gen.uniform_int(1, 3);
        for (int k = 1; k <= n_img; ++k) set.images[k * 10] = {"f" + std::to_string(k) + ".png", gen.uniform_int(1, 9), gen.uniform_int(1, 9)};
        std::int64_t id = 1;
        for (const auto& [img, info] : set.images)
            for (int k = gen.uniform_int(0, 4); k > 0; --k) {
                auto r = record(id++, img, gen.mask(info.height, info.width, 0.4),
                                gen.coin() ? AnnotationSource::pseudo : AnnotationSource::original,
                                gen.uniform_int(0, 100) / 100.0);
                if (gen.coin()) r.category_id = gen.uniform_int(1, 5);
                if (gen.coin()) r.extra["iscrowd"] = 0;
                set.annotations.push_back(std::move(r));
            }
        if (gen.coin()) set.provenance = {{"pipeline", "x"}, {"config_hash", "00ff"}};
        const auto path = dir.path() / "rt.json";
        io::save_annotations(set, path);
        const auto back = io::load_annotations(path);
        EXPECT_EQ(back, set);
        EXPECT_EQ(io::dump_annotations(back), slurp(path)) << "not byte-stable";
    }
}

TEST(SaveAnnotations, UnwritablePath) {
    EXPECT_THROW(io::save_annotations(AnnotationSet{}, "/nonexistent_dir/x.json"), ParseError);
}

TEST(FilterClasses, VocSubset) {
    const auto set = io::load_annotations(kFixtures / "voc_mixed.json");
    ASSERT_EQ(set.annotations.size(), 5u);
    EXPECT_EQ(set.annotations[4].mask, rect(4, 4, 0, 0, 2, 2));
    const std::vector<std::int64_t> voc{1, 3, 18};
    const auto kept = io::filter_classes(set, voc);
    EXPECT_EQ(kept.annotations.size(), 3u);
    EXPECT_EQ(kept.images.size(), 2u);
    const std::vector<std::int64_t> all{1, 3, 18, 90, 91};
    EXPECT_EQ(io::filter_classes(set, all), set);
    const auto none = io::filter_classes(set, {});
    EXPECT_TRUE(none.annotations.empty());
    EXPECT_EQ(none.images.size(), 2u);
    const std::vector<std::int64_t> unknown{42};
    EXPECT_THROW(io::filter_classes(set, unknown), PreconditionError);
    EXPECT_THROW(io::filter_classes(AnnotationSet{}, voc), PreconditionError);
}

TEST(PriorMap, ExactBytes) {
    const RealGrid map(2, 2, std::vector<double>{0.0, 0.25, 0.25, 0.5});
    const std::string want = std::string("OPRIOR1\n2 2\n") + std::string("\x00\x00\x00\x00", 4) +
                             std::string("\x00\x00\x80\x3e", 4) + std::string("\x00\x00\x80\x3e", 4) +
                             std::string("\x00\x00\x00\x3f", 4);
    EXPECT_EQ(io::encode_prior_map(map), want);
    const auto back = io::decode_prior_map(want);
    EXPECT_TRUE(std::equal(back.values().begin(), back.values().end(), map.values().begin()));
}

TEST(PriorMap, HeaderIsWidthThenHeight) {
    const RealGrid map(2, 3, 0.0);
    EXPECT_EQ(io::encode_prior_map(map).substr(0, 12), "OPRIOR1\n3 2\n");
}

TEST(PriorMap, FileRoundTripBitwise) {
    Gen gen(82);
    TempDir dir;
    for (int i = 0; i < 20; ++i) {
        RealGrid map(gen.uniform_int(1, 30), gen.uniform_int(1, 30), 0.0);
        for (double& v : map.values()) v = static_cast<double>(static_cast<float>(gen.uniform(0, 1e3)));
        io::save_prior_map(map, dir.path() / "m.oprior");
        const auto back = io::load_prior_map(dir.path() / "m.oprior");
        ASSERT_EQ(back.height(), map.height());
        ASSERT_EQ(back.width(), map.width());
        EXPECT_TRUE(std::equal(back.values().begin(), back.values().end(), map.values().begin()));
    }
}

TEST(PriorMap, Rejections) {
    const std::string good = io::encode_prior_map(RealGrid(2, 2, 0.5));
    EXPECT_THROW(io::decode_prior_map(good.substr(0, good.size() - 4)), ParseError);
    EXPECT_THROW(io::decode_prior_map(good + "x"), ParseError);
    EXPECT_THROW(io::decode_prior_map("OPRIOR2\n" + good.substr(8)), ParseError);
    EXPECT_THROW(io::decode_prior_map("OPRIOR1\n2x2\n"), ParseError);
    EXPECT_THROW(io::decode_prior_map("OPRIOR1\n0 2\n"), ParseError);
    std::string nan = good;
    nan.replace(12, 4, std::string("\x00\x00\xc0\x7f", 4));
    EXPECT_THROW(io::decode_prior_map(nan), ParseError);
    std::string neg = good;
    neg.replace(12, 4, std::string("\x00\x00\x80\xbf", 4));
    EXPECT_THROW(io::decode_prior_map(neg), ParseError);
    EXPECT_THROW(io::encode_prior_map(RealGrid(1, 1, -1.0)), PreconditionError);
    EXPECT_THROW(io::load_prior_map("/nonexistent.oprior"), ParseError);
}

TEST(Base64, KnownVectorsAndRoundTrip) {
    EXPECT_EQ(io::base64::encode(""), "");
    EXPECT_EQ(io::base64::encode("f"), "Zg==");
    EXPECT_EQ(io::base64::encode("fo"), "Zm8=");
    EXPECT_EQ(io::base64::encode("foobar"), "Zm9vYmFy");
    EXPECT_EQ(io::base64::decode("Zm9vYg=="), "foob");
    EXPECT_THROW(io::base64::decode("Zm9"), ParseError);
    EXPECT_THROW(io::base64::decode("Zm9*"), ParseError);
    Gen gen(83);
    for (int i = 0; i < 100; ++i) {
        std::string s(static_cast<std::size_t>(gen.uniform_int(0, 40)), '\0');
        for (char& c : s) c = static_cast<char>(gen.uniform_int(0, 255));
        EXPECT_EQ(io::base64::decode(io::base64::encode(s)), s);
    }
}

TEST(Images, PngAndPpmRoundTrip) {
    Gen gen(84);
    TempDir dir;
    const auto img = gen.noise_image(7, 9);
    io::write_png(dir.path() / "a.png", img);
    io::write_ppm(dir.path() / "a.ppm", img);
    EXPECT_EQ(io::read_image(dir.path() / "a.png"), img);
    EXPECT_EQ(io::read_image(dir.path() / "a.ppm"), img);
}

TEST(Images, LabelPngKeeps16BitValues) {
    TempDir dir;
    LabelGrid labels(5, 6, 0);
    labels(1, 2) = 300;
    labels(5, 4) = 65535;
    labels(0, 0) = 7;
    io::write_label_png(dir.path() / "l.png", labels);
    EXPECT_EQ(io::read_labels(dir.path() / "l.png"), labels);
    EXPECT_THROW(io::write_label_png(dir.path() / "bad.png", LabelGrid(1, 1, -1)), PreconditionError);
}

TEST(Images, PgmLabelsAndGrayImage) {
    TempDir dir;
    spit(dir.path() / "l.pgm", std::string("P5\n# c\n3 1\n255\n") + std::string("\x00\x05\xff", 3));
    const auto labels = io::read_labels(dir.path() / "l.pgm");
    EXPECT_EQ(labels(1, 0), 5);
    EXPECT_EQ(labels(2, 0), 255);
    const auto img = io::read_image(dir.path() / "l.pgm");
    EXPECT_EQ(img(1, 0), (Rgb{5, 5, 5}));
}

TEST(Images, Rejections) {
    TempDir dir;
    EXPECT_THROW(io::read_image(dir.path() / "missing.png"), ParseError);
    spit(dir.path() / "junk.png", "not an image");
    EXPECT_THROW(io::read_image(dir.path() / "junk.png"), ParseError);
    spit(dir.path() / "short.ppm", "P6\n4 4\n255\nabc");
    EXPECT_THROW(io::read_image(dir.path() / "short.ppm"), ParseError);
    io::write_png(dir.path() / "rgb.png", RgbImage(2, 2));
    EXPECT_THROW(io::read_labels(dir.path() / "rgb.png"), ParseError);
}

TEST(Images, ScaledPgm) {
    TempDir dir;
    io::write_pgm_scaled(dir.path() / "m.pgm", RealGrid(1, 2, std::vector<double>{0.5, 1.0}));
    EXPECT_EQ(slurp(dir.path() / "m.pgm"), std::string("P5\n2 1\n255\n") + std::string("\x80\xff", 2));
}

TEST(Detections, ArrayAndAnnotationForms) {
    AnnotationSet gt;
    gt.images[1] = {"a.png", 4, 4};
    const json seg{{"size", {4, 4}}, {"counts", {0, 4, 12}}};
    const auto arr = io::detections_from_json(json::array({{{"image_id", 1}, {"segmentation", seg}, {"score", 0.5}}}), gt);
    ASSERT_EQ(arr.size(), 1u);
    EXPECT_EQ(arr[0].mask, rect(4, 4, 0, 0, 1, 4));
    EXPECT_DOUBLE_EQ(arr[0].score, 0.5);
    const auto obj = io::detections_from_json({{"annotations", {{{"image_id", 1}, {"segmentation", seg}, {"score", 1}}}}}, gt);
    EXPECT_EQ(obj.size(), 1u);
    EXPECT_THROW(io::detections_from_json(json::array({{{"image_id", 2}, {"segmentation", seg}, {"score", 0.5}}}), gt),
                 ParseError);
    EXPECT_THROW(io::detections_from_json(json::array({{{"image_id", 1}, {"segmentation", seg}, {"score", 2}}}), gt),
                 ParseError);
    EXPECT_THROW(io::detections_from_json(json::array({{{"image_id", 1}, {"segmentation", seg}}}), gt), ParseError);
}

TEST(Detections, LoadFromFile) {
    TempDir dir;
    AnnotationSet gt;
    gt.images[1] = {"a.png", 4, 4};
    spit(dir.path() / "d.json", R"([{"image_id":1,"segmentation":{"size":[4,4],"counts":[16]},"score":0.25}])");
    const auto d = io::load_detections(dir.path() / "d.json", gt);
    ASSERT_EQ(d.size(), 1u);
    EXPECT_EQ(d[0].mask.area(), 0u);
}
