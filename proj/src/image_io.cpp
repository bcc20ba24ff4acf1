#include "dsa/image_io.hpp"

#include <jpeglib.h>
#include <png.h>

#include <csetjmp>
#include <cstring>
#include <fstream>

namespace dsa {

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DecodeFailure("cannot open: " + p.string());
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                     std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("cannot write: " + p.string());
}

// ---------------------------------------------------------------------------
// PNG
// ---------------------------------------------------------------------------

namespace {

struct MemReader {
    const std::uint8_t* data;
    std::size_t size;
    std::size_t pos;
};

void png_mem_read(png_structp png, png_bytep out, png_size_t n) {
    auto* r = static_cast<MemReader*>(png_get_io_ptr(png));
    if (r->pos + n > r->size) {
        png_error(png, "truncated png");
        return;
    }
    std::memcpy(out, r->data + r->pos, n);
    r->pos += n;
}

void png_mem_write(png_structp png, png_bytep data, png_size_t n) {
    auto* v = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    v->insert(v->end(), data, data + n);
}

void png_mem_flush(png_structp) {}

void png_silent_warning(png_structp, png_const_charp) {}

bool looks_png(const std::vector<std::uint8_t>& b) {
    static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    return b.size() >= 8 && std::memcmp(b.data(), sig, 8) == 0;
}

bool looks_jpeg(const std::vector<std::uint8_t>& b) {
    return b.size() >= 3 && b[0] == 0xff && b[1] == 0xd8 && b[2] == 0xff;
}

bool looks_bmp(const std::vector<std::uint8_t>& b) {
    return b.size() >= 2 && b[0] == 'B' && b[1] == 'M';
}

Image decode_png_impl(const std::vector<std::uint8_t>& bytes, bool raw_indices, Mask* mask_out) {
    Image img;
    std::vector<png_bytep> rows;
    MemReader reader{bytes.data(), bytes.size(), 0};

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw DecodeFailure("png alloc failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw DecodeFailure("png alloc failed");
    }
    png_set_error_fn(png, png_get_error_ptr(png), nullptr, png_silent_warning);

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DecodeFailure("corrupt png");
    }

    png_set_read_fn(png, &reader, png_mem_read);
    png_read_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (w == 0 || h == 0) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DecodeFailure("zero-dimension png");
    }

    if (raw_indices) {
        // masks: read palette/gray samples verbatim, no color expansion
        if (color != PNG_COLOR_TYPE_PALETTE && color != PNG_COLOR_TYPE_GRAY) {
            png_destroy_read_struct(&png, &info, nullptr);
            throw DecodeFailure("mask png must be paletted or gray");
        }
        if (depth < 8) png_set_packing(png);
        if (depth == 16) png_set_strip_16(png);
        png_read_update_info(png, info);
        mask_out->width = static_cast<int>(w);
        mask_out->height = static_cast<int>(h);
        mask_out->labels.assign(static_cast<std::size_t>(w) * h, 0);
        std::vector<std::uint8_t> rowbuf(static_cast<std::size_t>(w));
        for (png_uint_32 y = 0; y < h; ++y) {
            png_read_row(png, rowbuf.data(), nullptr);
            for (png_uint_32 x = 0; x < w; ++x)
                mask_out->labels[static_cast<std::size_t>(y) * w + x] = rowbuf[x];
        }
        png_destroy_read_struct(&png, &info, nullptr);
        return img;
    }

    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (depth == 16) png_set_strip_16(png);
    if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS))
        png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const int channels = png_get_channels(png, info);
    if (channels != 1 && channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DecodeFailure("unsupported png channel count");
    }

    img.width = static_cast<int>(w);
    img.height = static_cast<int>(h);
    img.channels = channels;
    img.data.assign(static_cast<std::size_t>(w) * h * channels, 0);
    rows.resize(h);
    for (png_uint_32 y = 0; y < h; ++y)
        rows[y] = img.data.data() + static_cast<std::size_t>(y) * w * channels;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

}  // namespace

std::vector<std::uint8_t> encode_png(const Image& img) {
    if (!img.valid()) throw DecodeFailure("invalid image buffer");
    std::vector<std::uint8_t> out;
    std::vector<png_bytep> rows(img.height);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png alloc failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("png alloc failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("png encode failed");
    }
    png_set_write_fn(png, &out, png_mem_write, png_mem_flush);
    png_set_IHDR(png, info, img.width, img.height, 8,
                 img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < img.height; ++y)
        rows[y] = const_cast<png_bytep>(img.data.data() +
                                        static_cast<std::size_t>(y) * img.width * img.channels);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

void save_png(const std::filesystem::path& p, const Image& img) {
    write_file_bytes(p, encode_png(img));
}

std::vector<std::uint8_t> encode_png_indexed(
    const Mask& m, const std::vector<std::array<std::uint8_t, 3>>& palette) {
    if (palette.empty() || palette.size() > 256) throw TooManyClasses("palette size out of range");
    std::vector<std::uint8_t> out;
    std::vector<std::uint8_t> pixels(static_cast<std::size_t>(m.width) * m.height);
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        if (m.labels[i] >= palette.size()) throw TooManyClasses("label exceeds palette");
        pixels[i] = static_cast<std::uint8_t>(m.labels[i]);
    }
    std::vector<png_color> plte(palette.size());
    for (std::size_t i = 0; i < palette.size(); ++i)
        plte[i] = {palette[i][0], palette[i][1], palette[i][2]};
    std::vector<png_bytep> rows(m.height);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png alloc failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("png alloc failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("png encode failed");
    }
    png_set_write_fn(png, &out, png_mem_write, png_mem_flush);
    png_set_IHDR(png, info, m.width, m.height, 8, PNG_COLOR_TYPE_PALETTE, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_PLTE(png, info, plte.data(), static_cast<int>(plte.size()));
    png_write_info(png, info);
    for (int y = 0; y < m.height; ++y)
        rows[y] = pixels.data() + static_cast<std::size_t>(y) * m.width;
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

Mask decode_png_indices(const std::vector<std::uint8_t>& bytes) {
    if (!looks_png(bytes)) throw DecodeFailure("not a png");
    Mask m;
    decode_png_impl(bytes, true, &m);
    return m;
}

Mask load_png_indices(const std::filesystem::path& p) {
    return decode_png_indices(read_file_bytes(p));
}

// ---------------------------------------------------------------------------
// JPEG
// ---------------------------------------------------------------------------

namespace {

struct JpegErr {
    jpeg_error_mgr mgr;
    std::jmp_buf jump;
};

void jpeg_error_trampoline(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErr*>(cinfo->err);
    std::longjmp(err->jump, 1);
}

void jpeg_silent_output(j_common_ptr) {}

Image decode_jpeg(const std::vector<std::uint8_t>& bytes) {
    Image img;
    jpeg_decompress_struct cinfo;
    JpegErr err;
    cinfo.err = jpeg_std_error(&err.mgr);
    err.mgr.error_exit = jpeg_error_trampoline;
    err.mgr.output_message = jpeg_silent_output;

    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw DecodeFailure("corrupt jpeg");
    }

    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
    jpeg_start_decompress(&cinfo);

    img.width = static_cast<int>(cinfo.output_width);
    img.height = static_cast<int>(cinfo.output_height);
    img.channels = cinfo.output_components;
    if (img.channels != 1 && img.channels != 3) {
        jpeg_destroy_decompress(&cinfo);
        throw DecodeFailure("unsupported jpeg channel count");
    }
    img.data.assign(static_cast<std::size_t>(img.width) * img.height * img.channels, 0);
    const std::size_t stride = static_cast<std::size_t>(img.width) * img.channels;
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = img.data.data() + cinfo.output_scanline * stride;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return img;
}

// ---------------------------------------------------------------------------
// BMP (uncompressed 8/24/32-bit, the ingest-only legacy format)
// ---------------------------------------------------------------------------

std::uint32_t rd32(const std::uint8_t* p) {
    return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t rd16(const std::uint8_t* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

Image decode_bmp(const std::vector<std::uint8_t>& b) {
    if (b.size() < 54) throw DecodeFailure("truncated bmp");
    const std::uint32_t data_offset = rd32(&b[10]);
    const std::uint32_t header_size = rd32(&b[14]);
    if (header_size < 40) throw DecodeFailure("unsupported bmp header");
    const std::int32_t w = static_cast<std::int32_t>(rd32(&b[18]));
    const std::int32_t h_raw = static_cast<std::int32_t>(rd32(&b[22]));
    const std::uint16_t bpp = rd16(&b[28]);
    const std::uint32_t compression = rd32(&b[30]);
    if (compression != 0) throw DecodeFailure("compressed bmp unsupported");
    if (w <= 0 || h_raw == 0) throw DecodeFailure("bad bmp dimensions");
    const bool top_down = h_raw < 0;
    const std::int32_t h = top_down ? -h_raw : h_raw;

    Image img = Image::make(w, h, bpp == 8 ? 1 : 3);
    const std::size_t row_size = ((static_cast<std::size_t>(w) * bpp + 31) / 32) * 4;
    if (b.size() < data_offset + row_size * static_cast<std::size_t>(h))
        throw DecodeFailure("truncated bmp pixel data");

    const std::uint8_t* palette = nullptr;
    if (bpp == 8) palette = &b[14 + header_size];

    for (std::int32_t y = 0; y < h; ++y) {
        const std::int32_t src_y = top_down ? y : h - 1 - y;
        const std::uint8_t* row = &b[data_offset + row_size * static_cast<std::size_t>(src_y)];
        for (std::int32_t x = 0; x < w; ++x) {
            if (bpp == 24 || bpp == 32) {
                const std::uint8_t* px = row + x * (bpp / 8);
                img.at(x, y, 0) = px[2];
                img.at(x, y, 1) = px[1];
                img.at(x, y, 2) = px[0];
            } else if (bpp == 8) {
                const std::uint8_t idx = row[x];
                // gray out through the palette's blue channel (BGR0 entries)
                img.at(x, y, 0) = palette[idx * 4 + 2];
            } else {
                throw DecodeFailure("unsupported bmp depth");
            }
        }
    }
    return img;
}

}  // namespace

Image decode_image(const std::vector<std::uint8_t>& bytes) {
    if (looks_png(bytes)) {
        Mask unused;
        return decode_png_impl(bytes, false, &unused);
    }
    if (looks_jpeg(bytes)) return decode_jpeg(bytes);
    if (looks_bmp(bytes)) return decode_bmp(bytes);
    throw DecodeFailure("unrecognized image format");
}

Image load_image(const std::filesystem::path& p) { return decode_image(read_file_bytes(p)); }

}  // namespace dsa
