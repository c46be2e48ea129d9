#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "audcast/dataset.hpp"
#include "audcast/refine.hpp"
#include "audcast/train.hpp"

using namespace audcast;

namespace {

RunConfig r2_config() {
  RunConfig cfg = tiny_config();
  cfg.use_audio_xattn = false;
  return cfg;
}

void perturb_zero_params(ParamStore& store, std::uint64_t seed, double stddev = 0.05) {
  Rng rng(seed);
  for (auto& p : store.all()) {
    if (!p.trainable) continue;
    bool all_zero = true;
    for (double v : p.tensor.data()) all_zero = all_zero && v == 0.0;
    if (all_zero)
      for (auto& v : p.tensor.data()) v = rng.normal(0.0, stddev);
  }
}

}  // namespace

TEST_CASE("mesh encoder") {
  RunConfig cfg = r2_config();
  SECTION("zero prior with zero biases gives zero tokens") {
    R2Model model(cfg, 7);
    StructuralPrior prior;
    prior.render = VideoClip(cfg.frames, cfg.height, cfg.width, 1);
    prior.regions.resize(static_cast<std::size_t>(cfg.frames));
    Tensor t = model.mesh_tokens(prior);
    REQUIRE(t.dim(0) == cfg.tokens_video());
    for (double v : t.data()) REQUIRE(v == 0.0);
  }
  SECTION("token count contract") {
    R2Model model(cfg, 7);
    ClipBundle b = generate_bundle(cfg, 3);
    Tensor t = model.mesh_tokens(b.prior);
    REQUIRE(t.dim(0) == cfg.tokens_video());
    REQUIRE(t.dim(1) == cfg.embed_dim);
  }
  SECTION("random prior matches a layer-by-layer oracle through shared ops") {
    // the mesh encoder must behave exactly like an identically-seeded head
    // position encoder (shared architecture)
    ParamStore sa, sb;
    Rng ra(99), rb(99);
    VolumeEncoder enc_a(sa, "hpe", cfg, ra);
    VolumeEncoder enc_b(sb, "mesh", cfg, rb);
    ClipBundle b = generate_bundle(cfg, 4);
    Tensor ta = enc_a.encode_volume(b.prior.render.data, cfg.frames, cfg.height, cfg.width);
    Tensor tb = enc_b.encode_volume(b.prior.render.data, cfg.frames, cfg.height, cfg.width);
    REQUIRE(ta.data() == tb.data());
  }
  SECTION("dimension mismatch rejected") {
    R2Model model(cfg, 7);
    StructuralPrior prior;
    prior.render = VideoClip(cfg.frames, cfg.height / 2, cfg.width, 1);
    prior.regions.resize(static_cast<std::size_t>(cfg.frames));
    CHECK_THROWS(model.mesh_tokens(prior));
  }
}

TEST_CASE("inpaint mask") {
  RunConfig cfg = r2_config();

  SECTION("no boxes give an empty mask") {
    std::vector<FrameRegions> regions(static_cast<std::size_t>(cfg.frames));
    InpaintMask m = build_inpaint_mask(regions, cfg);
    REQUIRE_FALSE(m.any());
  }

  SECTION("full-frame boxes give an all-ones mask") {
    std::vector<FrameRegions> regions(static_cast<std::size_t>(cfg.frames));
    for (auto& r : regions) r.face = Box{0, 0, static_cast<double>(cfg.width),
                                         static_cast<double>(cfg.height)};
    InpaintMask m = build_inpaint_mask(regions, cfg);
    for (auto v : m.cells) REQUIRE(v == 1);
  }

  SECTION("single-patch box marks that patch plus its one-ring") {
    // patch (t=1, y=0, x=1) covers pixels frames [2,4), rows [0,8), cols [8,16)
    std::vector<FrameRegions> regions(static_cast<std::size_t>(cfg.frames));
    regions[2].face = Box{9, 1, 15, 7};  // strictly inside that patch
    regions[3].face = regions[2].face;
    InpaintMask m = build_inpaint_mask(regions, cfg);
    // rasterizer oracle: recompute which patches must be set
    const int nt = cfg.latent_frames() / cfg.p_t;
    const int ny = cfg.latent_height() / cfg.p_h;
    const int nx = cfg.latent_width() / cfg.p_w;
    for (int tp = 0; tp < nt; ++tp)
      for (int yp = 0; yp < ny; ++yp)
        for (int xp = 0; xp < nx; ++xp) {
          const bool want = std::abs(tp - 1) <= 1 && std::abs(yp - 0) <= 1 &&
                            std::abs(xp - 1) <= 1;
          // check one representative cell of the patch
          const bool got = m.at(tp * cfg.p_t, yp * cfg.p_h, xp * cfg.p_w) != 0;
          REQUIRE(got == want);
        }
  }
}

TEST_CASE("assemble refine input") {
  RunConfig cfg = r2_config();
  R2Model model(cfg, 11);
  perturb_zero_params(model.params(), 111);
  ClipBundle bundle = generate_bundle(cfg, 12);
  LatentClip stage1 = model.codec().encode(bundle.clip);
  R2Conds conds = build_r2_conds(model, stage1, bundle.prior, bundle.ref,
                                 bundle.face_boxes()[0]);

  SECTION("empty mask passes stage-1 tokens through unmasked") {
    R2Conds open = conds;
    std::fill(open.token_mask.begin(), open.token_mask.end(), 0.0);
    Tensor cond = model.assemble_cond_tokens(open);
    // oracle: embed h2 rows, concat with mesh tokens, project, position, role
    Tensor h2 = model.embed_patch_rows(open.h2_patch_rows, cfg.tokens_video());
    Tensor mesh = model.mesh_tokens(open.prior);
    const Parameter* w = model.params().find("cond.w");
    const Parameter* b = model.params().find("cond.b");
    Tensor want = add_rowvec(matmul(concat_cols(h2, mesh), w->tensor), b->tensor);
    // strip positions and role to compare the projection output
    Tensor diff = sub(cond, want);
    // remaining difference is exactly position + role, identical across trials
    R2Conds open2 = open;
    for (auto& v : open2.h2_patch_rows) v += 0.25;
    Tensor cond2 = model.assemble_cond_tokens(open2);
    Tensor h2b = model.embed_patch_rows(open2.h2_patch_rows, cfg.tokens_video());
    Tensor want2 = add_rowvec(matmul(concat_cols(h2b, mesh), w->tensor), b->tensor);
    Tensor diff2 = sub(cond2, want2);
    for (std::size_t i = 0; i < diff.numel(); ++i)
      REQUIRE(diff.data()[i] == Catch::Approx(diff2.data()[i]).margin(1e-12));
  }

  SECTION("all-ones mask carries mesh information only") {
    R2Conds closed = conds;
    std::fill(closed.token_mask.begin(), closed.token_mask.end(), 1.0);
    Tensor a = model.assemble_cond_tokens(closed);
    R2Conds altered = closed;
    for (auto& v : altered.h2_patch_rows) v = 0.77;  // different stage-1 content
    Tensor b = model.assemble_cond_tokens(altered);
    REQUIRE(a.data() == b.data());
  }

  SECTION("random case matches the assembly oracle") {
    Tensor got = model.assemble_cond_tokens(conds);
    Tensor h2 = model.embed_patch_rows(conds.h2_patch_rows, cfg.tokens_video());
    std::vector<double> keep(conds.token_mask.size());
    for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = 1.0 - conds.token_mask[i];
    h2 = row_scale(h2, keep);
    Tensor mesh = model.mesh_tokens(conds.prior);
    const Parameter* w = model.params().find("cond.w");
    const Parameter* b = model.params().find("cond.b");
    Tensor want = add_rowvec(matmul(concat_cols(h2, mesh), w->tensor), b->tensor);
    // add position and role exactly as the model does
    Tensor zero_like = model.assemble_cond_tokens([&] {
      R2Conds z = conds;
      std::fill(z.h2_patch_rows.begin(), z.h2_patch_rows.end(), 0.0);
      std::fill(z.prior.render.data.begin(), z.prior.render.data.end(), 0.0);
      return z;
    }());
    Tensor h2z = row_scale(model.embed_patch_rows(std::vector<double>(conds.h2_patch_rows.size(), 0.0),
                                                  cfg.tokens_video()),
                           keep);
    StructuralPrior zero_prior = conds.prior;
    std::fill(zero_prior.render.data.begin(), zero_prior.render.data.end(), 0.0);
    Tensor meshz = model.mesh_tokens(zero_prior);
    Tensor wantz = add_rowvec(matmul(concat_cols(h2z, meshz), w->tensor), b->tensor);
    for (std::size_t i = 0; i < got.numel(); ++i) {
      const double pos_role = zero_like.data()[i] - wantz.data()[i];
      REQUIRE(got.data()[i] == Catch::Approx(want.data()[i] + pos_role).margin(1e-9));
    }
  }

  SECTION("length mismatch rejected") {
    R2Conds bad = conds;
    bad.token_mask.pop_back();
    CHECK_THROWS(model.assemble_cond_tokens(bad));
  }
}

TEST_CASE("refine_clip clamping") {
  RunConfig cfg = r2_config();
  R2Model model(cfg, 13);
  perturb_zero_params(model.params(), 131);
  ClipBundle bundle = generate_bundle(cfg, 14);
  LatentClip gt = model.codec().encode(bundle.clip);
  // stage-1 stand-in: ground truth with a corrupted masked region
  R2Conds conds = build_r2_conds(model, gt, bundle.prior, bundle.ref, bundle.face_boxes()[0]);
  LatentClip stage1 = gt;
  {
    Rng rng(3);
    for (int f = 0; f < stage1.frames; ++f)
      for (int y = 0; y < stage1.height; ++y)
        for (int x = 0; x < stage1.width; ++x)
          if (conds.mask.at(f, y, x))
            for (int c = 0; c < stage1.channels; ++c)
              stage1.at(f, y, x, c) += rng.normal(0.0, 0.5);
  }
  conds.h2_patch_rows = patchify_raw(stage1, cfg.patch_geometry());
  DiffusionSchedule sched = DiffusionSchedule::from_config(cfg);

  SECTION("empty mask returns stage-1 exactly") {
    R2Conds open = conds;
    std::fill(open.mask.cells.begin(), open.mask.cells.end(), 0);
    std::fill(open.token_mask.begin(), open.token_mask.end(), 0.0);
    LatentClip out = refine_clip(model, stage1, open, sched, 5);
    REQUIRE(out.data == stage1.data);
  }

  SECTION("outside-mask cells are bitwise stage-1 at every sampler step") {
    std::vector<bool> checked_steps;
    Rng rng(mix_seed(5, 0x5245464Eull));
    DenoiseFn fn = [&](const LatentClip& zt, int t) {
      // before each model call the working latent must hold stage-1 values
      // outside the mask (the clamp ran after the previous step)
      for (int f = 0; f < zt.frames; ++f)
        for (int y = 0; y < zt.height; ++y)
          for (int x = 0; x < zt.width; ++x)
            if (!conds.mask.at(f, y, x))
              for (int c = 0; c < zt.channels; ++c)
                REQUIRE(zt.at(f, y, x, c) == stage1.at(f, y, x, c));
      checked_steps.push_back(true);
      return model.denoise(zt, t, conds);
    };
    ClampFn clamp = [&](LatentClip& z, int, bool) {
      for (int f = 0; f < z.frames; ++f)
        for (int y = 0; y < z.height; ++y)
          for (int x = 0; x < z.width; ++x)
            if (!conds.mask.at(f, y, x))
              for (int c = 0; c < z.channels; ++c) z.at(f, y, x, c) = stage1.at(f, y, x, c);
    };
    LatentClip out = sample_latent(fn, stage1, sched, rng, clamp);
    REQUIRE(checked_steps.size() == static_cast<std::size_t>(sched.t_sample));
    for (int f = 0; f < out.frames; ++f)
      for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x)
          if (!conds.mask.at(f, y, x))
            for (int c = 0; c < out.channels; ++c)
              REQUIRE(out.at(f, y, x, c) == stage1.at(f, y, x, c));
  }

  SECTION("a perfect-oracle model reconstructs the masked region") {
    DenoiseFn oracle_model = [&](const LatentClip& zt, int t) {
      const double ab = sched.abar(t);
      LatentClip eps = zt;
      for (std::size_t i = 0; i < zt.data.size(); ++i)
        eps.data[i] = (zt.data[i] - std::sqrt(ab) * gt.data[i]) / std::sqrt(1.0 - ab);
      return eps;
    };
    Rng rng(17);
    ClampFn clamp = [&](LatentClip& z, int, bool) {
      for (int f = 0; f < z.frames; ++f)
        for (int y = 0; y < z.height; ++y)
          for (int x = 0; x < z.width; ++x)
            if (!conds.mask.at(f, y, x))
              for (int c = 0; c < z.channels; ++c) z.at(f, y, x, c) = stage1.at(f, y, x, c);
    };
    LatentClip out = sample_latent(oracle_model, stage1, sched, rng, clamp);
    for (int f = 0; f < out.frames; ++f)
      for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x)
          if (conds.mask.at(f, y, x))
            for (int c = 0; c < out.channels; ++c)
              REQUIRE(out.at(f, y, x, c) == Catch::Approx(gt.at(f, y, x, c)).margin(1e-6));
  }

  SECTION("mesh sensitivity: masked output reacts to the prior, unmasked never") {
    LatentClip a = refine_clip(model, stage1, conds, sched, 21);
    R2Conds perturbed = conds;
    // move structure inside the masked region
    for (int f = 0; f < perturbed.prior.render.frames; ++f) {
      const Box& face = perturbed.prior.regions[static_cast<std::size_t>(f)].face;
      for (int y = 0; y < perturbed.prior.render.height; ++y)
        for (int x = 0; x < perturbed.prior.render.width; ++x)
          if (face.contains_pixel(x, y))
            perturbed.prior.render.at(f, y, x, 0) =
                1.0 - perturbed.prior.render.at(f, y, x, 0);
    }
    LatentClip b = refine_clip(model, stage1, perturbed, sched, 21);
    double masked_diff = 0.0;
    for (int f = 0; f < a.frames; ++f)
      for (int y = 0; y < a.height; ++y)
        for (int x = 0; x < a.width; ++x)
          for (int c = 0; c < a.channels; ++c) {
            const double d = std::abs(a.at(f, y, x, c) - b.at(f, y, x, c));
            if (conds.mask.at(f, y, x))
              masked_diff = std::max(masked_diff, d);
            else
              REQUIRE(d == 0.0);
          }
    REQUIRE(masked_diff > 0.0);
  }

  SECTION("audio-free contract: poisoned audio features never reach the model") {
    ClipBundle poisoned = bundle;
    for (auto& v : poisoned.audio.data) v = std::nan("");
    R2TrainSample s = make_r2_train_sample(model, poisoned);
    s.conds.h2_patch_rows = patchify_raw(stage1, cfg.patch_geometry());
    LatentClip out = refine_clip(model, stage1, s.conds, sched, 23);
    for (double v : out.data) REQUIRE(std::isfinite(v));
  }

  SECTION("audio-bearing config rejected at construction") {
    RunConfig bad = cfg;
    bad.use_audio_xattn = true;
    CHECK_THROWS_WITH(R2Model(bad, 1), Catch::Matchers::ContainsSubstring("audio"));
  }
}
