#include <gtest/gtest.h>

#include <map>
#include <set>

#include "texanno/dataprep.hpp"
#include "texanno/errors.hpp"
#include "texanno/synthgen.hpp"

using namespace texanno;

namespace {

// n annotations of `cls`, one per 224x224 cell across enough 1024x768 images.
void add_class(Corpus& c, const std::string& cls, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const std::string img = "img-" + cls + "-" + std::to_string(i / 12);
    if (i % 12 == 0) c.images.push_back({img, 1024, 768});
    const int col = static_cast<int>(i % 4), row = static_cast<int>((i / 4) % 3);
    c.annotations.push_back({cls + "-" + std::to_string(i), img, cls, {col * 250, row * 250, col * 250 + 200, row * 250 + 200}});
  }
}

DatasetOptions no_aug(std::uint64_t seed = 1) {
  DatasetOptions o;
  o.augment_per_patch = 0;
  o.seed = seed;
  return o;
}

std::size_t count_label(const std::vector<TrainingPatch>& ps, const std::string& label) {
  return static_cast<std::size_t>(std::count_if(ps.begin(), ps.end(), [&](const auto& p) { return p.label == label; }));
}

}  // namespace

TEST(ClassPatches, OnePerAnnotation) {
  Corpus c;
  c.images.push_back({"a", 300, 300});
  c.annotations.push_back({"x", "a", "mold", {10, 10, 60, 90}});
  const auto p = extract_class_patches(c);
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p[0].label, "mold");
  EXPECT_EQ(p[0].rect, (Rect{10, 10, 60, 90}));
  EXPECT_EQ(p[0].source_annotation, "x");
}

TEST(ClassPatches, CollectionCorpus) {
  Corpus c;
  for (const auto& [name, n] : collection_class_counts()) add_class(c, name, static_cast<std::size_t>(n));
  EXPECT_EQ(extract_class_patches(c).size(), 4577u);
}

TEST(ClassPatches, ConstantRegionGivesConstantPatch) {
  Raster img(300, 200, Rgb{30, 40, 50});
  const auto out = render_patch(img, {"a", {5, 5, 105, 55}, "mold", std::nullopt, std::nullopt});
  ASSERT_EQ(out.width(), 224);
  for (int y = 0; y < 224; ++y)
    for (int x = 0; x < 224; ++x) ASSERT_EQ(out.at(x, y), (Rgb{30, 40, 50}));
}

TEST(ClassPatches, Errors) {
  Corpus c;
  c.images.push_back({"a", 300, 300});
  c.annotations.push_back({"x", "missing", "mold", {0, 0, 10, 10}});
  try {
    extract_class_patches(c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDanglingReference);
  }
  c.annotations = {{"x", "a", "mold", {250, 250, 310, 290}}};
  try {
    extract_class_patches(c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kBounds);
  }
}

TEST(BackgroundPatches, Examples) {
  const CorpusImage full{"a", 500, 300};
  const std::vector<CorpusAnnotation> cover{{"x", "a", "mold", {0, 0, 500, 300}}};
  EXPECT_TRUE(extract_background_patches(full, cover).empty());
  EXPECT_EQ(extract_background_patches({"b", 424, 224}, {}).size(), 2u);

  const std::vector<CorpusAnnotation> corner{{"x", "a", "mold", {0, 0, 224, 224}}};
  const auto bg = extract_background_patches(full, corner);
  std::vector<Rect> expected;
  for (const auto& w : generate_windows(500, 300)) {
    bool touch = false;
    for (int y = w.y0; y < w.y1 && !touch; ++y)
      for (int x = w.x0; x < w.x1; ++x)
        if (x < 224 && y < 224) {
          touch = true;
          break;
        }
    if (!touch) expected.push_back(w);
  }
  ASSERT_EQ(bg.size(), expected.size());
  for (std::size_t i = 0; i < bg.size(); ++i) {
    EXPECT_EQ(bg[i].rect, expected[i]);
    EXPECT_EQ(bg[i].label, "background");
  }
  // Annotations of other images are ignored.
  const std::vector<CorpusAnnotation> other{{"x", "z", "mold", {0, 0, 500, 300}}};
  EXPECT_EQ(extract_background_patches(full, other).size(), 6u);
}

TEST(Dataset, RareClassExcluded) {
  Corpus c;
  add_class(c, "mold", 99);
  add_class(c, "eggs", 100);
  const auto d = build_dataset(c, no_aug());
  EXPECT_EQ(d.class_roster, (std::vector<std::string>{"eggs", "background"}));
  EXPECT_EQ(count_label(d.train, "mold") + count_label(d.validation, "mold"), 0u);
}

TEST(Dataset, ThirdToValidation) {
  Corpus c;
  add_class(c, "mold", 102);
  const auto d = build_dataset(c, no_aug());
  EXPECT_EQ(count_label(d.validation, "mold"), 34u);
  EXPECT_EQ(count_label(d.train, "mold"), 68u);
  const std::size_t bg = count_label(d.train, "background") + count_label(d.validation, "background");
  EXPECT_GT(bg, 0u);
  EXPECT_EQ(count_label(d.validation, "background"), bg / 3);
}

TEST(Dataset, PartitionAndAugmentation) {
  Corpus c;
  add_class(c, "mold", 150);
  add_class(c, "eggs", 120);
  add_class(c, "plastic", 30);
  DatasetOptions o;
  o.seed = 5;
  o.augment_per_patch = 3;
  const auto d = build_dataset(c, o);

  std::vector<TrainingPatch> base, augmented;
  for (const auto& p : d.train) (p.augmentation ? augmented : base).push_back(p);
  EXPECT_EQ(augmented.size(), 3 * base.size());

  // Base train and validation partition the surviving class patches plus
  // the background windows.
  std::set<std::string> train_src, val_src;
  for (const auto& p : base)
    if (p.source_annotation) train_src.insert(*p.source_annotation);
  for (const auto& p : d.validation) {
    EXPECT_FALSE(p.augmentation.has_value());
    if (p.source_annotation) val_src.insert(*p.source_annotation);
  }
  for (const auto& s : val_src) EXPECT_EQ(train_src.count(s), 0u);
  EXPECT_EQ(train_src.size() + val_src.size(), 270u);

  // Augmented variants derive from training patches only.
  for (const auto& p : augmented) {
    ASSERT_TRUE(!p.source_annotation || train_src.count(*p.source_annotation));
    p.augmentation->validate();
  }
}

TEST(Dataset, Deterministic) {
  Corpus c;
  add_class(c, "mold", 130);
  add_class(c, "eggs", 110);
  DatasetOptions o;
  o.seed = 9;
  const auto a = build_dataset(c, o), b = build_dataset(c, o);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.validation, b.validation);
  o.seed = 10;
  EXPECT_NE(build_dataset(c, o).validation, a.validation);
}

TEST(Dataset, RosterOrder) {
  Corpus c;
  add_class(c, "mold", 100);
  add_class(c, "eggs", 100);
  add_class(c, "scale", 100);
  auto o = no_aug();
  o.class_order = {"scale", "mold"};
  EXPECT_EQ(build_dataset(c, o).class_roster, (std::vector<std::string>{"scale", "mold", "eggs", "background"}));
}

TEST(Dataset, NoSurvivingClass) {
  Corpus c;
  add_class(c, "mold", 10);
  try {
    build_dataset(c, no_aug());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfiguration);
  }
}

TEST(Dataset, JsonRoundTrip) {
  Corpus c;
  add_class(c, "mold", 100);
  DatasetOptions o;
  o.seed = 3;
  const auto d = build_dataset(c, o);
  const auto back = DatasetSplit::from_json(nlohmann::json::parse(d.to_json().dump()));
  EXPECT_EQ(back.train, d.train);
  EXPECT_EQ(back.validation, d.validation);
  EXPECT_EQ(back.class_roster, d.class_roster);
  EXPECT_EQ(back.seed, d.seed);
}

TEST(Dataset, RenderedPatchesGroupedByImage) {
  Corpus c;
  add_class(c, "mold", 24);
  const auto patches = extract_class_patches(c);
  std::map<std::string, int> loads;
  std::vector<bool> seen(patches.size(), false);
  for_each_rendered_patch(
      patches,
      [&](const std::string& id) {
        ++loads[id];
        return Raster(1024, 768, Rgb{1, 2, 3});
      },
      [&](std::size_t i, const Raster& r) {
        seen[i] = true;
        EXPECT_EQ(r.width(), 224);
      });
  for (bool s : seen) EXPECT_TRUE(s);
  for (const auto& [id, n] : loads) EXPECT_EQ(n, 1) << id;
}
