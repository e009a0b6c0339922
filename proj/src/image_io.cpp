#include "commin/image_io.hpp"

#include <png.h>

#include <cctype>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>

#include "commin/error.hpp"

namespace commin::io {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

std::string lower_ext(const std::filesystem::path& p) {
    auto e = p.extension().string();
    for (auto& ch : e) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return e;
}

Image8 read_png(const std::filesystem::path& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw InvalidArgument("cannot open");
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) throw InvalidArgument("not a PNG file");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw InvalidArgument("libpng initialisation failed");
    }
    Image8 img;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw InvalidArgument("corrupt PNG data");
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);
    img.width = png_get_image_width(png, info);
    img.height = png_get_image_height(png, info);
    img.channels = png_get_channels(png, info);
    img.pixels.resize(static_cast<std::size_t>(img.width * img.height * img.channels));
    rows.resize(static_cast<std::size_t>(img.height));
    for (std::int64_t y = 0; y < img.height; ++y)
        rows[static_cast<std::size_t>(y)] = img.pixels.data() + y * img.width * img.channels;
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

// Binary P5/P6 with maxval 255.
Image8 read_pnm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidArgument("cannot open");
    auto token = [&] {
        std::string t;
        char c;
        while (in.get(c)) {
            if (c == '#') {
                std::string skip;
                std::getline(in, skip);
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                if (!t.empty()) break;
            } else {
                t.push_back(c);
            }
        }
        return t;
    };
    const auto magic = token();
    if (magic != "P6" && magic != "P5") throw InvalidArgument("unsupported PNM variant '" + magic + "'");
    Image8 img;
    try {
        img.width = std::stoll(token());
        img.height = std::stoll(token());
        if (std::stoll(token()) != 255) throw InvalidArgument("only maxval 255 is supported");
    } catch (const std::logic_error&) {
        throw InvalidArgument("malformed PNM header");
    }
    img.channels = magic == "P6" ? 3 : 1;
    img.pixels.resize(static_cast<std::size_t>(img.width * img.height * img.channels));
    in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) throw InvalidArgument("truncated PNM data");
    return img;
}

}  // namespace

bool is_image_file(const std::filesystem::path& path) {
    const auto e = lower_ext(path);
    return e == ".png" || e == ".ppm" || e == ".pgm";
}

Image8 read_image(const std::filesystem::path& path) {
    const auto e = lower_ext(path);
    if (e == ".png") return read_png(path);
    if (e == ".ppm" || e == ".pgm") return read_pnm(path);
    throw InvalidArgument("unsupported image extension '" + e + "'");
}

void write_png(const std::filesystem::path& path, const Image8& image) {
    if (image.channels != 1 && image.channels != 3) throw InvalidArgument("write_png: need 1 or 3 channels");
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw Error("cannot create " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw Error("libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error("failed writing " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
                 image.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (std::int64_t y = 0; y < image.height; ++y)
        png_write_row(png, const_cast<png_bytep>(image.pixels.data() + y * image.width * image.channels));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

torch::Tensor to_tensor(const Image8& image) {
    auto t = torch::from_blob(const_cast<std::uint8_t*>(image.pixels.data()),
                              {image.height, image.width, image.channels}, torch::kUInt8);
    return t.permute({2, 0, 1}).to(torch::kFloat).div(127.5).sub(1.0).contiguous();
}

Image8 from_tensor(const torch::Tensor& chw) {
    if (chw.dim() != 3) throw InvalidArgument("from_tensor: expected [C,H,W]");
    auto t = ((chw.detach().to(torch::kFloat).clamp(-1.0, 1.0) + 1.0) * 127.5).round().to(torch::kUInt8);
    t = t.permute({1, 2, 0}).contiguous();
    Image8 img{chw.size(1), chw.size(2), chw.size(0), {}};
    img.pixels.assign(t.data_ptr<std::uint8_t>(), t.data_ptr<std::uint8_t>() + t.numel());
    return img;
}

void write_png_grid(const std::filesystem::path& path, const torch::Tensor& batch, std::int64_t columns) {
    if (batch.dim() != 4 || batch.size(0) == 0) throw InvalidArgument("write_png_grid: expected non-empty NCHW");
    const auto n = batch.size(0), c = batch.size(1), h = batch.size(2), w = batch.size(3);
    columns = std::max<std::int64_t>(1, std::min(columns, n));
    const auto rows = (n + columns - 1) / columns;
    auto canvas = torch::full({c, rows * h, columns * w}, -1.0);
    for (std::int64_t i = 0; i < n; ++i) {
        const auto r = i / columns, col = i % columns;
        canvas.slice(1, r * h, (r + 1) * h).slice(2, col * w, (col + 1) * w).copy_(batch[i]);
    }
    write_png(path, from_tensor(canvas));
}

}  // namespace commin::io
