#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "audcast/conditioning.hpp"
#include "audcast/dataset.hpp"

using namespace audcast;

TEST_CASE("build_head_mask") {
  SECTION("no boxes flags a headless sample") {
    HeadMask m = build_head_mask({}, 4, 16, 16);
    REQUIRE_FALSE(m.any());
  }

  SECTION("single static box dilates and replicates per frame") {
    std::vector<Box> boxes(3, Box{4, 4, 8, 8});
    HeadMask m = build_head_mask(boxes, 3, 16, 16, 0.1);
    const Box want = Box{4, 4, 8, 8}.dilated(0.1);
    for (int f = 0; f < 3; ++f)
      for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x)
          REQUIRE(m.at(f, y, x) == (want.contains_pixel(x, y) ? 1 : 0));
  }

  SECTION("two moving boxes rasterize their union") {
    std::vector<Box> boxes = {Box{1, 1, 5, 5}, Box{8, 8, 12, 12}};
    HeadMask m = build_head_mask(boxes, 2, 16, 16, 0.1);
    // independent per-pixel rasterizer over the dilated boxes
    const Box a = Box{1, 1, 5, 5}.dilated(0.1).clamped(16, 16);
    const Box b = Box{8, 8, 12, 12}.dilated(0.1).clamped(16, 16);
    for (int f = 0; f < 2; ++f)
      for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) {
          const bool want = a.contains_pixel(x, y) || b.contains_pixel(x, y);
          REQUIRE(m.at(f, y, x) == (want ? 1 : 0));
        }
  }

  SECTION("out-of-bounds boxes are rejected") {
    CHECK_THROWS_WITH(build_head_mask({Box{-1, 0, 4, 4}, Box{0, 0, 4, 4}}, 2, 16, 16),
                      Catch::Matchers::ContainsSubstring("bounds"));
  }
}

TEST_CASE("derive_sequential_gate") {
  RunConfig cfg = tiny_config();  // 8 frames, 16x16, r_t=2, r_s=4, patch (1,2,2)

  SECTION("all-zero mask gives an all-zero gate") {
    HeadMask m(cfg.frames, cfg.height, cfg.width);
    auto gate = derive_sequential_gate(m, cfg);
    REQUIRE(static_cast<int>(gate.size()) == cfg.tokens_video());
    for (double g : gate) REQUIRE(g == 0.0);
  }

  SECTION("full mask gives an all-one gate") {
    HeadMask m(cfg.frames, cfg.height, cfg.width);
    std::fill(m.data.begin(), m.data.end(), 1);
    auto gate = derive_sequential_gate(m, cfg);
    for (double g : gate) REQUIRE(g == 1.0);
  }

  SECTION("box covering exactly one token gates only that token") {
    // token (t=1, y=0, x=1) covers pixel frames [2,4), rows [0,8), cols [8,16)
    HeadMask m(cfg.frames, cfg.height, cfg.width);
    for (int f = 2; f < 4; ++f)
      for (int y = 0; y < 8; ++y)
        for (int x = 8; x < 16; ++x) m.at(f, y, x) = 1;
    auto gate = derive_sequential_gate(m, cfg);
    for (int tok = 0; tok < cfg.tokens_video(); ++tok) {
      const double frac = token_overlap_fraction(m, cfg, tok);
      REQUIRE((gate[static_cast<std::size_t>(tok)] == 1.0) == (frac >= cfg.gate_threshold));
    }
    // exactly one token crosses the threshold
    double count = 0;
    for (double g : gate) count += g;
    REQUIRE(count == 1.0);
  }

  SECTION("a box touching a patch corner does not gate it") {
    HeadMask m(cfg.frames, cfg.height, cfg.width);
    // 2x2 pixel corner of the token at (t=0,y=0,x=0), two frames
    for (int f = 0; f < 2; ++f)
      for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 2; ++x) m.at(f, y, x) = 1;
    auto gate = derive_sequential_gate(m, cfg);
    REQUIRE(gate[0] == 0.0);
  }

  SECTION("gate/mask consistency holds exhaustively on random masks") {
    Rng rng(9);
    for (int trial = 0; trial < 5; ++trial) {
      HeadMask m(cfg.frames, cfg.height, cfg.width);
      for (auto& v : m.data) v = rng.uniform() < 0.3 ? 1 : 0;
      auto gate = derive_sequential_gate(m, cfg);
      for (int tok = 0; tok < cfg.tokens_video(); ++tok) {
        const double frac = token_overlap_fraction(m, cfg, tok);
        if (gate[static_cast<std::size_t>(tok)] == 1.0)
          REQUIRE(frac >= cfg.gate_threshold);
        else
          REQUIRE(frac < cfg.gate_threshold);
      }
    }
  }
}

TEST_CASE("dropout_motion") {
  MotionTokens mt;
  mt.present = true;
  mt.rows = 4;
  mt.cols = 2;
  mt.raw.assign(8, 1.0);

  SECTION("p=0 is the identity, p=1 always drops") {
    Rng rng(1);
    REQUIRE(dropout_motion(mt, 0.0, rng).present);
    REQUIRE_FALSE(dropout_motion(mt, 1.0, rng).present);
  }

  SECTION("drop frequency at p=0.5 over 10000 seeded draws") {
    Rng rng(123);
    int dropped = 0;
    for (int i = 0; i < 10000; ++i)
      if (!dropout_motion(mt, 0.5, rng).present) ++dropped;
    const double freq = dropped / 10000.0;
    REQUIRE(freq >= 0.48);
    REQUIRE(freq <= 0.52);
  }

  SECTION("p outside [0,1] rejected") {
    Rng rng(1);
    CHECK_THROWS(dropout_motion(mt, 1.5, rng));
  }
}

TEST_CASE("project_audio") {
  const int layers = 12, len = 5, da = 4, e = 6;
  Rng rng(31);
  Tensor logits = Tensor::zeros({layers});
  Tensor w = Tensor::randn({da, e}, rng, 0.5);
  Tensor b = Tensor::randn({e}, rng, 0.2);

  SECTION("identical layers with uniform weights equal a single-layer projection") {
    AudioFeatures f(layers, len, da);
    Rng fr(32);
    for (int i = 0; i < len; ++i)
      for (int d = 0; d < da; ++d) {
        const double v = fr.normal();
        for (int l = 0; l < layers; ++l) f.at(l, i, d) = v;
      }
    Tensor tok = project_audio(f, logits, w, b);
    // single-layer oracle
    for (int i = 0; i < len; ++i)
      for (int j = 0; j < e; ++j) {
        long double acc = b.at(j);
        for (int d = 0; d < da; ++d) acc += f.at(0, i, d) * w.at(d, j);
        REQUIRE(tok.at(i, j) == Catch::Approx(static_cast<double>(acc)).margin(1e-10));
      }
  }

  SECTION("random features match the explicit weighted-sum oracle") {
    AudioFeatures f(layers, len, da);
    Rng fr(33);
    for (auto& v : f.data) v = fr.normal();
    Tensor lg = Tensor::randn({layers}, fr, 0.7);
    Tensor tok = project_audio(f, lg, w, b);
    // softmax of logits in long double
    long double mx = -1e30L, denom = 0.0L;
    for (int l = 0; l < layers; ++l) mx = std::max(mx, static_cast<long double>(lg.at(l)));
    for (int l = 0; l < layers; ++l) denom += std::exp(lg.at(l) - mx);
    for (int i = 0; i < len; ++i)
      for (int j = 0; j < e; ++j) {
        long double acc = b.at(j);
        for (int d = 0; d < da; ++d) {
          long double mixd = 0.0L;
          for (int l = 0; l < layers; ++l)
            mixd += std::exp(lg.at(l) - mx) / denom * f.at(l, i, d);
          acc += mixd * w.at(d, j);
        }
        REQUIRE(tok.at(i, j) == Catch::Approx(static_cast<double>(acc)).margin(1e-9));
      }
  }

  SECTION("temporal shift equivariance") {
    AudioFeatures f(layers, len, da);
    Rng fr(34);
    for (auto& v : f.data) v = fr.normal();
    Tensor tok = project_audio(f, logits, w, b);
    // shift features by 2 frames
    AudioFeatures g(layers, len, da);
    for (int l = 0; l < layers; ++l)
      for (int i = 0; i < len; ++i)
        for (int d = 0; d < da; ++d) g.at(l, (i + 2) % len, d) = f.at(l, i, d);
    Tensor tok2 = project_audio(g, logits, w, b);
    for (int i = 0; i < len; ++i)
      for (int j = 0; j < e; ++j)
        REQUIRE(tok2.at((i + 2) % len, j) == tok.at(i, j));
  }

  SECTION("wrong layer count rejected") {
    AudioFeatures f(11, len, da);
    CHECK_THROWS_WITH(project_audio(f, logits, w, b),
                      Catch::Matchers::ContainsSubstring("12"));
  }
}

TEST_CASE("appearance tokens") {
  RunConfig cfg = tiny_config();
  LatentCodec codec(cfg.codec_config());
  PatchGeometry g = cfg.patch_geometry();

  SECTION("zero frame gives zero tokens") {
    VideoClip ref(1, cfg.height, cfg.width, 3);
    CodecConfig cc = cfg.codec_config();
    cc.center = 0.0;  // keep the block projection linear through zero
    LatentCodec codec0(cc);
    AppearanceTokens r = extract_appearance_tokens(ref, codec0, g);
    for (double v : r.raw) REQUIRE(v == 0.0);
  }

  SECTION("shape contract: one latent frame of tokens") {
    VideoClip ref(1, cfg.height, cfg.width, 3);
    Rng rng(71);
    for (auto& v : ref.data) v = rng.uniform(0.2, 0.8);
    AppearanceTokens r = extract_appearance_tokens(ref, codec, g);
    REQUIRE(r.rows == (cfg.latent_height() / cfg.p_h) * (cfg.latent_width() / cfg.p_w));
    REQUIRE(r.cols == cfg.patch_values());
  }

  SECTION("static clip start matches its own appearance tokens") {
    // clip whose first temporal block repeats frame 0
    RunConfig c2 = cfg;
    VideoClip clip(c2.frames, c2.height, c2.width, 3);
    Rng rng(72);
    VideoClip frame0(1, c2.height, c2.width, 3);
    for (auto& v : frame0.data) v = rng.uniform(0.2, 0.8);
    for (int f = 0; f < c2.frames; ++f)
      std::copy(frame0.data.begin(), frame0.data.end(),
                clip.data.begin() + static_cast<std::ptrdiff_t>(f * clip.frame_size()));
    AppearanceTokens r = extract_appearance_tokens(frame0, codec, g);
    LatentClip z = codec.encode(clip);
    auto video_rows = patchify_raw(z, g);
    // first latent-frame block of video tokens equals the appearance rows
    for (int i = 0; i < r.rows * r.cols; ++i)
      REQUIRE(r.raw[static_cast<std::size_t>(i)] ==
              Catch::Approx(video_rows[static_cast<std::size_t>(i)]).margin(1e-12));
  }

  SECTION("multi-frame reference rejected") {
    VideoClip two(2, cfg.height, cfg.width, 3);
    CHECK_THROWS(extract_appearance_tokens(two, codec, g));
  }
}

TEST_CASE("identity embedder") {
  IdentityEmbedder emb(32);
  RunConfig cfg = tiny_config();

  SECTION("identical crops embed bitwise identically") {
    ClipBundle b = generate_bundle(cfg, 5);
    const Box box = b.face_boxes()[0];
    auto t1 = emb.embed_tokens(b.ref, 0, box);
    auto t2 = emb.embed_tokens(b.ref, 0, box);
    REQUIRE(t1 == t2);
  }

  SECTION("rows are unit norm") {
    ClipBundle b = generate_bundle(cfg, 6);
    auto t = emb.embed_tokens(b.ref, 0, b.face_boxes()[0]);
    for (int row = 0; row < emb.token_count(); ++row) {
      double n = 0.0;
      for (int j = 0; j < emb.dim(); ++j) n += t[row * emb.dim() + j] * t[row * emb.dim() + j];
      REQUIRE(std::sqrt(n) == Catch::Approx(1.0).margin(1e-9));
    }
  }

  SECTION("different synthetic identities separate under the pooled embedding") {
    // pairwise sweep over the generator's identity palette
    std::vector<std::vector<double>> pooled;
    for (int identity = 0; identity < cfg.identities; ++identity) {
      ClipBundle b = generate_bundle_for_identity(cfg, 7, identity);
      pooled.push_back(emb.pooled(b.ref, 0, b.face_boxes()[0]));
    }
    for (std::size_t i = 0; i < pooled.size(); ++i)
      for (std::size_t j = i + 1; j < pooled.size(); ++j) {
        double dot = 0.0;
        for (std::size_t k = 0; k < pooled[i].size(); ++k) dot += pooled[i][k] * pooled[j][k];
        INFO("identities " << i << " vs " << j);
        REQUIRE(dot < 0.9);
      }
  }

  SECTION("empty head box rejected") {
    VideoClip ref(1, 16, 16, 3);
    CHECK_THROWS(emb.embed_tokens(ref, 0, Box{4, 4, 4, 4}));
  }
}
