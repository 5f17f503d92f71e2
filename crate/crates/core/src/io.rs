//! Image files: binary P5 graymaps and 8-bit grayscale PNG.
//!
//! Rows are stored top first, so the world's +y is up in any viewer. The
//! pixel grid's placement travels with the file: PGM carries it in
//! `# scale` / `# origin` comment lines, PNG in a `gog-frame` text chunk.
//! Files without it load on a caller-supplied default frame.

use std::io::{BufRead, Cursor, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::metrics::GrayImage;
use crate::percept::{BinaryMask, MaskFrame};

const FRAME_KEY: &str = "gog-frame";

/// An 8-bit raster in world row order (row 0 at the frame origin).
#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
    /// Placement read from the file, if it had one.
    pub frame: Option<MaskFrame>,
}

impl Raster {
    pub fn from_mask(mask: &BinaryMask) -> Self {
        Raster {
            width: mask.width(),
            height: mask.height(),
            data: mask.bits.iter().map(|b| if *b { 255 } else { 0 }).collect(),
            frame: Some(mask.frame),
        }
    }

    pub fn from_gray(img: &GrayImage) -> Self {
        Raster {
            width: img.width(),
            height: img.height(),
            data: img.to_u8(),
            frame: Some(img.frame),
        }
    }

    /// The stored frame, or one with `scale` and the origin at zero.
    pub fn frame_or(&self, scale: f64) -> Result<MaskFrame> {
        match self.frame {
            Some(f) if f.width_px == self.width && f.height_px == self.height => Ok(f),
            Some(_) => Err(Error::validation(
                "image",
                "embedded frame does not match the image size",
            )),
            None => MaskFrame::new(self.width, self.height, scale, Vec2::zeros()),
        }
    }

    /// Pixels at or above half intensity are set.
    pub fn to_mask(&self, default_scale: f64) -> Result<BinaryMask> {
        let frame = self.frame_or(default_scale)?;
        Ok(BinaryMask {
            frame,
            bits: self.data.iter().map(|v| *v >= 128).collect(),
        })
    }

    pub fn to_gray(&self, default_scale: f64) -> Result<GrayImage> {
        let frame = self.frame_or(default_scale)?;
        GrayImage::from_data(
            frame,
            self.data.iter().map(|v| f64::from(*v) / 255.0).collect(),
        )
    }

    fn top_first(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.data.len());
        for row in self.data.chunks(self.width.max(1)).rev() {
            out.extend_from_slice(row);
        }
        out
    }

    fn from_top_first(
        width: usize,
        height: usize,
        top_first: &[u8],
        frame: Option<MaskFrame>,
    ) -> Self {
        let mut data = Vec::with_capacity(top_first.len());
        for row in top_first.chunks(width.max(1)).rev() {
            data.extend_from_slice(row);
        }
        Raster {
            width,
            height,
            data,
            frame,
        }
    }

    pub fn write_pgm<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "P5")?;
        if let Some(f) = &self.frame {
            writeln!(w, "# scale {}", f.scale)?;
            writeln!(w, "# origin {} {}", f.origin.x, f.origin.y)?;
        }
        writeln!(w, "{} {}", self.width, self.height)?;
        writeln!(w, "255")?;
        w.write_all(&self.top_first())?;
        Ok(())
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_pgm(&mut buf).expect("writing to memory");
        buf
    }

    pub fn read_pgm(bytes: &[u8]) -> Result<Self> {
        let bad = |line: usize, reason: &str| Error::Parse {
            what: "PGM header",
            line,
            reason: reason.to_string(),
        };
        let mut cursor = Cursor::new(bytes);
        let mut tokens: Vec<String> = Vec::new();
        let mut scale = None;
        let mut origin = None;
        let mut line_no = 0;
        // header: magic, width, height, maxval; comments may sit between
        while tokens.len() < 4 {
            let mut line = String::new();
            if cursor.read_line(&mut line)? == 0 {
                return Err(bad(line_no, "truncated header"));
            }
            line_no += 1;
            let (body, comment) = match line.split_once('#') {
                Some((b, c)) => (b, Some(c.trim())),
                None => (line.as_str(), None),
            };
            if let Some(c) = comment {
                if let Some(v) = c.strip_prefix("scale") {
                    scale = Some(
                        v.trim()
                            .parse::<f64>()
                            .map_err(|_| bad(line_no, "bad scale comment"))?,
                    );
                } else if let Some(v) = c.strip_prefix("origin") {
                    let xy: Vec<f64> = v
                        .split_whitespace()
                        .map(str::parse)
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| bad(line_no, "bad origin comment"))?;
                    if xy.len() != 2 {
                        return Err(bad(line_no, "origin needs two numbers"));
                    }
                    origin = Some(Vec2::new(xy[0], xy[1]));
                }
            }
            tokens.extend(body.split_whitespace().map(str::to_string));
        }
        if tokens.len() > 4 {
            return Err(bad(
                line_no,
                "pixel data must start on the line after maxval",
            ));
        }
        if tokens[0] != "P5" {
            return Err(bad(1, "not a binary graymap (P5)"));
        }
        let num = |k: usize| {
            tokens[k]
                .parse::<usize>()
                .map_err(|_| bad(line_no, "header fields must be integers"))
        };
        let (width, height, maxval) = (num(1)?, num(2)?, num(3)?);
        if maxval == 0 || maxval > 255 {
            return Err(bad(line_no, "only 8-bit graymaps are supported"));
        }
        let start = cursor.position() as usize;
        let pixels = &bytes[start..];
        if pixels.len() < width * height {
            return Err(Error::validation(
                "PGM",
                format!(
                    "expected {} pixel bytes, found {}",
                    width * height,
                    pixels.len()
                ),
            ));
        }
        let top: Vec<u8> = pixels[..width * height]
            .iter()
            .map(|v| ((u32::from(*v) * 255 + maxval as u32 / 2) / maxval as u32).min(255) as u8)
            .collect();
        let frame = match (scale, origin) {
            (Some(s), Some(o)) => Some(MaskFrame::new(width, height, s, o)?),
            (Some(s), None) => Some(MaskFrame::new(width, height, s, Vec2::zeros())?),
            _ => None,
        };
        Ok(Raster::from_top_first(width, height, &top, frame))
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut buf, self.width as u32, self.height as u32);
            enc.set_color(png::ColorType::Grayscale);
            enc.set_depth(png::BitDepth::Eight);
            if let Some(f) = &self.frame {
                enc.add_text_chunk(
                    FRAME_KEY.to_string(),
                    format!("{} {} {}", f.scale, f.origin.x, f.origin.y),
                )?;
            }
            let mut writer = enc.write_header()?;
            writer.write_image_data(&self.top_first())?;
            writer.finish()?;
        }
        Ok(buf)
    }

    /// Decodes any PNG to 8-bit luminance; color is averaged, alpha dropped.
    pub fn read_png(bytes: &[u8]) -> Result<Self> {
        let mut dec = png::Decoder::new(Cursor::new(bytes));
        dec.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
        let mut reader = dec.read_info()?;
        let mut buf = vec![
            0;
            reader
                .output_buffer_size()
                .ok_or_else(|| Error::validation("PNG", "image too large"))?
        ];
        let info = reader.next_frame(&mut buf)?;
        let (w, h) = (info.width as usize, info.height as usize);
        let channels = match info.color_type {
            png::ColorType::Grayscale => 1,
            png::ColorType::GrayscaleAlpha => 2,
            png::ColorType::Rgb => 3,
            png::ColorType::Rgba => 4,
            png::ColorType::Indexed => {
                return Err(Error::validation("PNG", "palette was not expanded"))
            }
        };
        let mut top = Vec::with_capacity(w * h);
        for row in buf.chunks(info.line_size).take(h) {
            for px in row[..w * channels].chunks(channels) {
                let v = match channels {
                    1 | 2 => px[0],
                    _ => ((u32::from(px[0]) + u32::from(px[1]) + u32::from(px[2]) + 1) / 3) as u8,
                };
                top.push(v);
            }
        }
        let frame = reader
            .info()
            .uncompressed_latin1_text
            .iter()
            .find(|t| t.keyword == FRAME_KEY)
            .and_then(|t| {
                let v: Vec<f64> = t
                    .text
                    .split_whitespace()
                    .filter_map(|s| s.parse().ok())
                    .collect();
                (v.len() == 3).then(|| MaskFrame::new(w, h, v[0], Vec2::new(v[1], v[2])))
            })
            .transpose()?;
        Ok(Raster::from_top_first(w, h, &top, frame))
    }

    /// Reads a PGM or PNG file, told apart by its leading bytes.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        if bytes.starts_with(b"P5") {
            Raster::read_pgm(&bytes)
        } else if bytes.starts_with(&[0x89, b'P', b'N', b'G']) {
            Raster::read_png(&bytes)
        } else {
            Err(Error::Config {
                path: path.to_path_buf(),
                message: "not a P5 graymap or PNG image".into(),
            })
        }
    }

    /// Writes PNG when the extension says so, P5 otherwise.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("png") => self.to_png()?,
            _ => self.to_pgm(),
        };
        std::fs::write(path, bytes)?;
        Ok(())
    }
}
