#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>

#include "tlda/config.hpp"

using namespace tlda;

namespace {

std::string temp_file(const std::string& name, const std::string& body) {
    auto path = (std::filesystem::temp_directory_path() / name).string();
    std::ofstream(path) << body;
    return path;
}

std::optional<ErrorCode> code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return std::nullopt;
}

}  // namespace

TEST(Config, DefaultsValidate) {
    RunConfig cfg;
    EXPECT_NO_THROW(cfg.validate());
    EXPECT_EQ(cfg.run.mode, "batched");
}

TEST(Config, Overrides) {
    RunConfig cfg;
    apply_overrides(cfg, {"fit.k=7", "fit.alpha0=0.25", "fit.shuffle=false", "run.mode=online",
                          "eval.vocab_sizes=10, 20,30", "synthetic.topic_weights=1,2"});
    EXPECT_EQ(cfg.fit.k, 7);
    EXPECT_DOUBLE_EQ(cfg.fit.alpha0, 0.25);
    EXPECT_FALSE(cfg.fit.shuffle);
    EXPECT_EQ(cfg.run.mode, "online");
    EXPECT_EQ(cfg.eval.vocab_sizes, (std::vector<Index>{10, 20, 30}));
    EXPECT_EQ(cfg.synthetic.topic_weights, (std::vector<double>{1, 2}));
    apply_overrides(cfg, {"fit.k=3"});
    EXPECT_EQ(cfg.fit.k, 3);
}

TEST(Config, BadOverrides) {
    RunConfig cfg;
    EXPECT_EQ(code_of([&] { apply_overrides(cfg, {"fit.nope=1"}); }), ErrorCode::InvalidArgument);
    EXPECT_EQ(code_of([&] { apply_overrides(cfg, {"fit.k"}); }), ErrorCode::InvalidArgument);
    EXPECT_EQ(code_of([&] { apply_overrides(cfg, {"fit.k=two"}); }), ErrorCode::InvalidArgument);
    EXPECT_EQ(code_of([&] { apply_overrides(cfg, {"fit.k=3x"}); }), ErrorCode::InvalidArgument);
    EXPECT_EQ(code_of([&] { apply_overrides(cfg, {"run.workers=-1"}); }), ErrorCode::InvalidArgument);
    EXPECT_EQ(code_of([&] { apply_overrides(cfg, {"fit.shuffle=maybe"}); }), ErrorCode::InvalidArgument);
}

TEST(Config, LoadFile) {
    auto path = temp_file("tlda_cfg.ini", "[fit]\nk = 4\nbeta=0.5\n\n[run]\nmode=online\n");
    RunConfig cfg = load_config_file(path);
    EXPECT_EQ(cfg.fit.k, 4);
    EXPECT_DOUBLE_EQ(cfg.fit.beta, 0.5);
    EXPECT_EQ(cfg.run.mode, "online");
    EXPECT_EQ(cfg.fit.d, RunConfig{}.fit.d);
}

TEST(Config, LoadFileErrors) {
    EXPECT_EQ(code_of([] { load_config_file("/nonexistent/tlda.ini"); }), ErrorCode::SourceUnreadable);
    auto unknown = temp_file("tlda_cfg_unknown.ini", "[fit]\nkk = 4\n");
    EXPECT_EQ(code_of([&] { load_config_file(unknown); }), ErrorCode::InvalidArgument);
    auto broken = temp_file("tlda_cfg_broken.ini", "[fit\nk = 4\n");
    EXPECT_EQ(code_of([&] { load_config_file(broken); }), ErrorCode::BadFormat);
    auto loose = temp_file("tlda_cfg_loose.ini", "k = 4\n");
    EXPECT_EQ(code_of([&] { load_config_file(loose); }), ErrorCode::InvalidArgument);
}

TEST(Config, ResolvedTextRoundTrips) {
    RunConfig cfg;
    apply_overrides(cfg, {"fit.k=5", "fit.alpha0=0.123456789012345", "eval.scaling_multiples=1,3"});
    std::string text = resolved_text(cfg);
    EXPECT_EQ(text.rfind("; schema 1\n", 0), 0u);
    EXPECT_NE(text.find("[fit]"), std::string::npos);
    auto path = temp_file("tlda_resolved.ini", text);
    RunConfig back = load_config_file(path);
    EXPECT_EQ(resolved_text(back), text);
    EXPECT_EQ(config_hash(back), config_hash(cfg));
    EXPECT_DOUBLE_EQ(back.fit.alpha0, 0.123456789012345);
}

TEST(Config, HashTracksValues) {
    RunConfig a, b;
    EXPECT_EQ(config_hash(a), config_hash(b));
    apply_overrides(b, {"fit.seed=99"});
    EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Config, WriteResolved) {
    auto path = (std::filesystem::temp_directory_path() / "tlda_written.ini").string();
    RunConfig cfg;
    write_resolved_config(path, cfg);
    std::ifstream is(path);
    std::string body((std::istreambuf_iterator<char>(is)), {});
    EXPECT_EQ(body, resolved_text(cfg));
}

TEST(Config, Validation) {
    auto bad = [](const std::string& kv, const std::string& extra = "fit.d=2") {
        RunConfig cfg;
        apply_overrides(cfg, {kv, extra});
        return code_of([&] { cfg.validate(); });
    };
    for (const char* kv : {"run.mode=fast", "run.log_level=loud", "input.format=xml", "run.top_words=0",
                           "online.warmup_fraction=0", "online.warmup_fraction=0.6", "fit.k=0", "fit.alpha0=-1",
                           "preprocess.lower_frac=0.9", "fit.k=3"})
        EXPECT_EQ(bad(kv), ErrorCode::InvalidArgument) << kv;
    EXPECT_EQ(bad("fit.k=3", "fit.d=3"), std::nullopt);
}
