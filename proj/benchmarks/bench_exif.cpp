#include <benchmark/benchmark.h>

#include "exifcons/exif.hpp"
#include "exifcons/image.hpp"

using namespace exifcons;
using namespace exifcons::exif;

static void BM_ReadJpegAttributes(benchmark::State& state) {
  ImageU8 img(64, 64);
  const std::uint16_t iso[] = {400};
  const auto tiff = build_tiff({Entry::ascii(Ifd::kImage, 0x010F, "Canon"),
                                Entry::ascii(Ifd::kImage, 0x0110, "Canon EOS 5D Mark III"),
                                Entry::rational(Ifd::kExif, 0x920A, 24, 1),
                                Entry::rational(Ifd::kExif, 0x829A, 1, 250),
                                Entry::shorts(Ifd::kExif, 0x8827, iso)});
  const auto jpeg = insert_app1(encode_jpeg(img, 90), tiff);
  for (auto _ : state) benchmark::DoNotOptimize(read_jpeg_attributes(jpeg));
}
BENCHMARK(BM_ReadJpegAttributes);

static void BM_EstimateQuality(benchmark::State& state) {
  const auto jpeg = encode_jpeg(ImageU8(64, 64), 72);
  for (auto _ : state) benchmark::DoNotOptimize(estimate_jpeg_quality(scan_jpeg(jpeg)));
}
BENCHMARK(BM_EstimateQuality);
