#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>

#include "oracle_ref.hpp"
#include "stsm/synth.hpp"
#include "stsm/tensor_io.hpp"

using namespace stsm;

namespace {

// frames as sortable blobs for multiset comparison
std::vector<std::vector<double>> frame_list(const Tensor5& clip) {
    const Dims5 d = clip.dims();
    std::vector<std::vector<double>> frames;
    for (index_t t = 0; t < d.t; ++t) {
        std::vector<double> frame;
        for (index_t c = 0; c < d.c; ++c)
            for (index_t h = 0; h < d.h; ++h)
                for (index_t w = 0; w < d.w; ++w) frame.push_back(clip.at(0, c, t, h, w));
        frames.push_back(std::move(frame));
    }
    return frames;
}

}  // namespace

TEST_CASE("noise-free clips contain exactly the square's pixels at one") {
    MotionTask task;
    task.frames = 8;
    task.height = task.width = 16;
    task.square = 3;
    task.noise = 0.0;
    std::vector<ClipSample> batch = generate_batch(task, 8, 42);
    REQUIRE(batch.size() == 8);
    for (const ClipSample& s : batch) {
        const Dims5 d = s.clip.dims();
        CHECK(d == Dims5{1, 1, 8, 16, 16});
        for (index_t t = 0; t < d.t; ++t) {
            int ones = 0, zeros = 0;
            for (index_t h = 0; h < d.h; ++h)
                for (index_t w = 0; w < d.w; ++w) {
                    const double v = s.clip.at(0, 0, t, h, w);
                    if (v == 1.0) ++ones;
                    else if (v == 0.0) ++zeros;
                }
            CHECK(ones == 9);
            CHECK(zeros == 16 * 16 - 9);
        }
    }
}

TEST_CASE("classes are balanced and pixel values stay inside [0,1]") {
    MotionTask task;  // defaults: 8 frames, 32x32, square 5, noise 0.05
    std::vector<ClipSample> batch = generate_batch(task, 40, 7);
    int counts[kMotionClasses] = {0, 0, 0, 0};
    for (const ClipSample& s : batch) {
        ++counts[s.label];
        for (index_t i = 0; i < s.clip.size(); ++i) {
            CHECK(s.clip[i] >= 0.0);
            CHECK(s.clip[i] <= 1.0);
        }
    }
    for (int c : counts) CHECK(c == 10);
}

TEST_CASE("reversal partners share their frame multiset") {
    MotionTask task;
    std::vector<ClipSample> batch = generate_batch(task, 16, 3);
    for (std::size_t i = 0; i + 1 < batch.size(); i += 2) {
        CHECK(batch[i].label + 1 == batch[i + 1].label);  // right/left then down/up
        auto a = frame_list(batch[i].clip);
        auto b = frame_list(batch[i + 1].clip);
        // exact reversal
        std::vector<std::vector<double>> reversed(b.rbegin(), b.rend());
        CHECK(a == reversed);
        // hence equal as multisets
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        CHECK(a == b);
    }
}

TEST_CASE("generation is deterministic in the seed") {
    MotionTask task;
    std::vector<ClipSample> a = generate_batch(task, 12, 99);
    std::vector<ClipSample> b = generate_batch(task, 12, 99);
    std::vector<ClipSample> c = generate_batch(task, 12, 100);
    REQUIRE(a.size() == b.size());
    bool all_equal = true, any_diff_other_seed = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        all_equal = all_equal && bit_equal(a[i].clip, b[i].clip) && a[i].label == b[i].label;
        any_diff_other_seed = any_diff_other_seed || !bit_equal(a[i].clip, c[i].clip);
    }
    CHECK(all_equal);
    CHECK(any_diff_other_seed);
}

TEST_CASE("three-channel variant replicates the channel") {
    MotionTask task;
    task.channels = 3;
    std::vector<ClipSample> batch = generate_batch(task, 4, 5);
    for (const ClipSample& s : batch) {
        const Dims5 d = s.clip.dims();
        CHECK(d.c == 3);
        for (index_t t = 0; t < d.t; ++t)
            for (index_t h = 0; h < d.h; ++h)
                for (index_t w = 0; w < d.w; ++w) {
                    CHECK(s.clip.at(0, 0, t, h, w) == s.clip.at(0, 1, t, h, w));
                    CHECK(s.clip.at(0, 0, t, h, w) == s.clip.at(0, 2, t, h, w));
                }
    }
}

TEST_CASE("geometry that cannot host the motion is rejected") {
    MotionTask task;
    task.frames = 8;
    task.height = task.width = 10;
    task.square = 5;  // 5 + 7 travel > 10
    CHECK_THROWS_AS(generate_batch(task, 4, 1), ConfigError);

    MotionTask bad_count;
    CHECK_THROWS_AS(generate_batch(bad_count, 6, 1), ConfigError);
    CHECK_THROWS_AS(generate_batch(bad_count, 0, 1), ConfigError);
}

TEST_CASE("clip fixture round-trip") {
    MotionTask task;
    std::vector<ClipSample> batch = generate_batch(task, 4, 17);
    const auto dir = std::filesystem::temp_directory_path() / "stsm_clip_test";
    std::filesystem::create_directories(dir);
    const auto path = dir / "clip.t5";

    save_clip_file(batch[2], path);
    ClipSample loaded = load_clip_file(path);
    CHECK(loaded.label == batch[2].label);
    CHECK(bit_equal(loaded.clip, batch[2].clip));

    // truncated tensor payload
    std::filesystem::resize_file(path, 64);
    CHECK_THROWS_AS(load_clip_file(path), FormatError);

    // missing sidecar
    save_tensor(batch[1].clip, dir / "nolabel.t5");
    CHECK_THROWS_AS(load_clip_file(dir / "nolabel.t5"), FormatError);

    std::filesystem::remove_all(dir);
}

TEST_CASE("stacking clips preserves order and layout") {
    MotionTask task;
    task.frames = 4;
    task.height = task.width = 12;
    task.square = 3;
    std::vector<ClipSample> batch = generate_batch(task, 8, 23);
    Tensor5 stacked = stack_clips(batch);
    CHECK(stacked.dims() == Dims5{8, 1, 4, 12, 12});
    for (std::size_t i = 0; i < batch.size(); ++i) {
        for (index_t t = 0; t < 4; ++t)
            for (index_t h = 0; h < 12; ++h)
                for (index_t w = 0; w < 12; ++w)
                    CHECK(stacked.at(static_cast<index_t>(i), 0, t, h, w) ==
                          batch[i].clip.at(0, 0, t, h, w));
    }
}
