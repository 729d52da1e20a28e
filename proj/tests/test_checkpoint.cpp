#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "compose/ablation.hpp"
#include "compose/checkpoint.hpp"
#include "compose/error.hpp"
#include "support.hpp"

using namespace compose;

namespace {

ModelConfig small_config() {
    ModelConfig c;
    c.num_classes = 4;
    c.frames = 6;
    c.latent_dim = 4;
    c.embed_dim = 4;
    c.width = 8;
    c.heads = 2;
    c.ffn_hidden = 16;
    c.encoder_layers = 1;
    c.decoder_layers = 1;
    c.prior_hidden = 8;
    c.batch_size = 4;
    c.lr = 1e-3;
    c.dr_every = 2;
    return c;
}

std::vector<TrainingItem> items_for(std::uint64_t seed, int frames) {
    Rng rng(seed);
    DataConfig dc;
    dc.frames = frames;
    auto subs = generate_subaction_set(dc, 3, "s", rng);
    auto comps = build_pseudo_dataset(subs, PairingPolicy::full_class(), 10, MixingRateDist::gaussian(0.1),
                                      BodyPartition::standard(), rng);
    return make_training_set(comps, subs, frames);
}

bool bit_equal(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

LossContext small_dr_context(const Inpainter& inp) {
    LossContext ctx;
    ctx.inpainter = &inp;
    ctx.dr.camera.height = ctx.dr.camera.width = 32;
    ctx.dr.camera.scale = 14;
    ctx.dr.camera.principal = Vec2(16, 14);
    return ctx;
}

}  // namespace

TEST_CASE("save then load is bit-exact") {
    testing::TempDir tmp;
    auto items = items_for(1, 6);
    auto cfg = small_config();
    cfg.epochs = 3;
    MeanFillInpainter mf;
    auto state = train(items, cfg, small_dr_context(mf), Rng(2));
    save_checkpoint(state, tmp / "ck.json");
    auto back = load_checkpoint(tmp / "ck.json");
    CHECK(bit_equal(back.model.params().flatten(), state.model.params().flatten()));
    CHECK(back.model.normalizer().mean == state.model.normalizer().mean);
    CHECK(back.model.normalizer().stddev == state.model.normalizer().stddev);
    CHECK(back.epoch == state.epoch);
    CHECK(back.history == state.history);
    CHECK(back.rng == state.rng);
    CHECK(back.optimizer.steps() == state.optimizer.steps());
    CHECK(to_json(back.model.config()) == to_json(state.model.config()));

    // A second save produces the same bytes.
    save_checkpoint(back, tmp / "ck2.json");
    CHECK(testing::read_file(tmp / "ck.json") == testing::read_file(tmp / "ck2.json"));
}

TEST_CASE("resumed training matches uninterrupted training") {
    testing::TempDir tmp;
    auto items = items_for(3, 6);
    auto cfg = small_config();
    cfg.epochs = 4;
    cfg.checkpoint_every = 2;
    MeanFillInpainter mf;
    const auto ctx = small_dr_context(mf);
    TrainOptions opts;
    opts.on_checkpoint = [&](const TrainState& s) {
        if (s.epoch == 2) save_checkpoint(s, tmp / "mid.json");
    };
    auto full = train(items, cfg, ctx, Rng(4), opts);
    auto resumed = load_checkpoint(tmp / "mid.json");
    CHECK(resumed.epoch == 2);
    train_more(resumed, items, ctx, 2);
    CHECK(resumed.history == full.history);
    CHECK(bit_equal(resumed.model.params().flatten(), full.model.params().flatten()));
}

TEST_CASE("loading rejects missing, malformed and mismatched files") {
    testing::TempDir tmp;
    CHECK_THROWS_AS(load_checkpoint(tmp / "missing.json"), IoError);
    {
        std::ofstream(tmp / "junk.json") << "{not json";
    }
    CHECK_THROWS_AS(load_checkpoint(tmp / "junk.json"), ParseError);

    auto items = items_for(5, 6);
    auto cfg = small_config();
    cfg.epochs = 1;
    auto state = train(items, cfg, {}, Rng(6));
    save_checkpoint(state, tmp / "ok.json");
    nlohmann::json j = nlohmann::json::parse(testing::read_file(tmp / "ok.json"));

    auto write_variant = [&](const std::string& name, nlohmann::json v) {
        std::ofstream(tmp / name) << v.dump();
        return tmp / name;
    };
    auto bad_version = j;
    bad_version["format_version"] = 99;
    CHECK_THROWS_AS(load_checkpoint(write_variant("v.json", bad_version)), ValidationError);
    auto no_params = j;
    no_params.erase("params");
    CHECK_THROWS_AS(load_checkpoint(write_variant("p.json", no_params)), ValidationError);
    auto other_model = j;
    other_model["model_config"]["width"] = 16;
    CHECK_THROWS_AS(load_checkpoint(write_variant("w.json", other_model)), ValidationError);
    {
        std::ofstream(tmp / "file") << "x";
    }
    CHECK_THROWS(save_checkpoint(state, tmp / "file" / "ck.json"));
}
