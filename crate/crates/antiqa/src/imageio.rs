//! PNG and JPEG decoding into the core pixel buffer.

use std::io::Cursor;
use std::path::Path;

use antiqa_core::RgbImage;
use image::{ImageFormat, ImageReader};

use crate::error::{Error, Result};
use crate::jsonl::write_bytes;

fn image_err(path: &Path, message: impl ToString) -> Error {
    Error::Image { path: path.to_path_buf(), message: message.to_string() }
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<RgbImage> {
    let reader = ImageReader::new(Cursor::new(bytes)).with_guessed_format().map_err(|e| image_err(path, e))?;
    match reader.format() {
        Some(ImageFormat::Png | ImageFormat::Jpeg) => {}
        Some(f) => return Err(image_err(path, format!("unsupported format {f:?}; only PNG and JPEG are read"))),
        None => return Err(image_err(path, "unrecognized image format; only PNG and JPEG are read")),
    }
    let rgb = reader.decode().map_err(|e| image_err(path, e))?.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    RgbImage::new(w, h, rgb.into_raw()).map_err(|m| image_err(path, m))
}

pub fn load(path: &Path) -> Result<RgbImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

pub fn encode_png(img: &RgbImage) -> Vec<u8> {
    let buf = image::RgbImage::from_raw(img.width() as u32, img.height() as u32, img.data().to_vec())
        .expect("buffer matches dimensions");
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png).expect("in-memory PNG encoding");
    out.into_inner()
}

pub fn save_png(path: &Path, img: &RgbImage) -> Result<()> {
    write_bytes(path, &encode_png(img))
}
