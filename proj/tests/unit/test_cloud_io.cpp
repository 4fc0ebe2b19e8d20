#include <sstream>

#include <gtest/gtest.h>

#include "manidiff/cloud_io.hpp"
#include "manidiff/manifold.hpp"
#include "manidiff/rng.hpp"

using namespace manidiff;

TEST(CloudIo, RoundTripIsExact) {
  Rng rng = make_stream(1, 0);
  const ManifoldCloud mc = make_manifold_cloud(ManifoldKind::torus, {2, 0, true}, 5, 40, rng);
  std::stringstream buf;
  write_cloud(buf, mc.cloud, mc.spec, {{"seed", "1"}, {"kind", "torus"}});
  const CloudFile back = read_cloud(buf);
  EXPECT_EQ(back.cloud.points, mc.cloud.points);
  EXPECT_EQ(back.cloud.weights, mc.cloud.weights);
  ASSERT_TRUE(back.spec.has_value());
  EXPECT_EQ(back.spec->intrinsic_dim, 2);
  EXPECT_EQ(back.spec->reach, mc.spec.reach);
  EXPECT_EQ(back.spec->regularity, mc.spec.regularity);
  EXPECT_EQ(back.metadata.at("seed"), "1");
  EXPECT_EQ(back.metadata.at("kind"), "torus");
}

TEST(CloudIo, WeightColumnIsLast) {
  PointCloudMeasure::Points pts(2, 2);
  pts << 0.0, 1.0, 2.0, 3.0;
  std::stringstream buf;
  write_cloud(buf, uniform_cloud(pts));
  std::string line, last;
  while (std::getline(buf, line)) last = line;
  std::istringstream fields(last);
  double a, b, w;
  fields >> a >> b >> w;
  EXPECT_EQ(a, 2.0);
  EXPECT_EQ(b, 3.0);
  EXPECT_EQ(w, 0.5);
}

TEST(CloudIo, RejectsMalformedInput) {
  std::istringstream no_header("1 2 0.5\n");
  EXPECT_THROW(read_cloud(no_header), std::invalid_argument);
  std::istringstream ragged("# manidiff-cloud 1\n# columns x0 x1 weight\n1 2 0.5\n1 0.5\n");
  EXPECT_THROW(read_cloud(ragged), std::invalid_argument);
  std::istringstream empty("# manidiff-cloud 1\n# columns x0 weight\n");
  EXPECT_THROW(read_cloud(empty), std::invalid_argument);
}

TEST(CloudIo, MetadataRoundTrip) {
  const Metadata m = {{"alpha", "1.5"}, {"name", "two words"}};
  std::stringstream buf;
  write_metadata(buf, m);
  EXPECT_EQ(read_metadata(buf), m);
  std::stringstream bad;
  EXPECT_THROW(write_metadata(bad, {{"has space", "x"}}), std::invalid_argument);
}
