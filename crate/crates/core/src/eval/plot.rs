//! Minimal PNG line plots: categorical x axis, polyline series with point
//! markers, and a built-in 5x7 bitmap font so no system font is needed.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::Result;

const WIDTH: u32 = 720;
const HEIGHT: u32 = 480;
const MARGIN_LEFT: u32 = 70;
const MARGIN_RIGHT: u32 = 20;
const MARGIN_TOP: u32 = 40;
const MARGIN_BOTTOM: u32 = 60;

const PALETTE: [[u8; 3]; 8] = [
    [214, 69, 65],
    [31, 119, 180],
    [44, 160, 44],
    [148, 103, 189],
    [255, 127, 14],
    [23, 190, 207],
    [140, 86, 75],
    [0, 0, 0],
];

/// 5x7 glyphs, one byte per row, bit 4 = leftmost column.
fn glyph(c: char) -> [u8; 7] {
    match c.to_ascii_uppercase() {
        '0' => [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E],
        '1' => [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E],
        '2' => [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F],
        '3' => [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E],
        '4' => [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02],
        '5' => [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E],
        '6' => [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E],
        '7' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
        '8' => [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E],
        '9' => [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C],
        'A' => [0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'B' => [0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E],
        'C' => [0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E],
        'D' => [0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C],
        'E' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F],
        'F' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10],
        'G' => [0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F],
        'H' => [0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'I' => [0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E],
        'J' => [0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C],
        'K' => [0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11],
        'L' => [0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F],
        'M' => [0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11],
        'N' => [0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11],
        'O' => [0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'P' => [0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10],
        'Q' => [0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D],
        'R' => [0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11],
        'S' => [0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E],
        'T' => [0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04],
        'U' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'V' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04],
        'W' => [0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A],
        'X' => [0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11],
        'Y' => [0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04],
        'Z' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F],
        '-' => [0x00, 0x00, 0x00, 0x0E, 0x00, 0x00, 0x00],
        '.' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C],
        ',' => [0x00, 0x00, 0x00, 0x00, 0x0C, 0x04, 0x08],
        '(' => [0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02],
        ')' => [0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08],
        '%' => [0x19, 0x19, 0x02, 0x04, 0x08, 0x13, 0x13],
        ':' => [0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00],
        '/' => [0x01, 0x01, 0x02, 0x04, 0x08, 0x10, 0x10],
        ' ' => [0x00; 7],
        _ => [0x1F, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1F],
    }
}

fn draw_text(img: &mut RgbImage, x: i64, y: i64, text: &str, color: [u8; 3]) {
    let mut cx = x;
    for c in text.chars() {
        let rows = glyph(c);
        for (dy, row) in rows.iter().enumerate() {
            for dx in 0..5 {
                if row >> (4 - dx) & 1 == 1 {
                    put(img, cx + dx as i64, y + dy as i64, color);
                }
            }
        }
        cx += 6;
    }
}

fn text_width(text: &str) -> i64 {
    6 * text.chars().count() as i64
}

fn put(img: &mut RgbImage, x: i64, y: i64, color: [u8; 3]) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, Rgb(color));
    }
}

fn draw_line(img: &mut RgbImage, x0: i64, y0: i64, x1: i64, y1: i64, color: [u8; 3]) {
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        put(img, x, y, color);
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

fn draw_marker(img: &mut RgbImage, x: i64, y: i64, color: [u8; 3]) {
    for dy in -1..=1 {
        for dx in -1..=1 {
            put(img, x + dx, y + dy, color);
        }
    }
}

/// Renders WER (percent, y) against a categorical SNR axis (x), one
/// polyline per series; `None` y-values leave gaps.
pub fn render_wer_plot(
    title: &str,
    x_labels: &[String],
    series: &[(String, Vec<Option<f64>>)],
    path: &Path,
) -> Result<()> {
    let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, Rgb([255, 255, 255]));
    let black = [0u8, 0, 0];
    let grey = [210u8, 210, 210];

    let x0 = MARGIN_LEFT as i64;
    let x1 = (WIDTH - MARGIN_RIGHT) as i64;
    let y0 = (HEIGHT - MARGIN_BOTTOM) as i64;
    let y1 = MARGIN_TOP as i64;

    let y_max = series
        .iter()
        .flat_map(|(_, ys)| ys.iter().flatten())
        .fold(0.0f64, |a, &b| a.max(b));
    let y_max = (5.0 * (y_max / 5.0).ceil()).max(5.0);

    let x_of = |i: usize| -> i64 {
        if x_labels.len() <= 1 {
            (x0 + x1) / 2
        } else {
            x0 + (x1 - x0) * i as i64 / (x_labels.len() as i64 - 1)
        }
    };
    let y_of = |v: f64| -> i64 { y0 - ((y0 - y1) as f64 * v / y_max).round() as i64 };

    for k in 0..=5 {
        let v = y_max * k as f64 / 5.0;
        let y = y_of(v);
        if k > 0 {
            draw_line(&mut img, x0, y, x1, y, grey);
        }
        let label = format!("{v:.0}");
        draw_text(&mut img, x0 - 10 - text_width(&label), y - 3, &label, black);
    }
    draw_line(&mut img, x0, y0, x1, y0, black);
    draw_line(&mut img, x0, y0, x0, y1, black);
    for (i, label) in x_labels.iter().enumerate() {
        let x = x_of(i);
        draw_line(&mut img, x, y0, x, y0 + 4, black);
        draw_text(&mut img, x - text_width(label) / 2, y0 + 8, label, black);
    }
    let x_title = "SNR (dB)";
    draw_text(
        &mut img,
        (x0 + x1) / 2 - text_width(x_title) / 2,
        y0 + 24,
        x_title,
        black,
    );
    draw_text(&mut img, 8, y1 - 20, "WER %", black);
    draw_text(
        &mut img,
        (x0 + x1) / 2 - text_width(title) / 2,
        10,
        title,
        black,
    );

    for (s, (label, ys)) in series.iter().enumerate() {
        let color = PALETTE[s % PALETTE.len()];
        let mut prev: Option<(i64, i64)> = None;
        for (i, y) in ys.iter().enumerate() {
            match y {
                Some(v) => {
                    let p = (x_of(i), y_of(*v));
                    draw_marker(&mut img, p.0, p.1, color);
                    if let Some(q) = prev {
                        draw_line(&mut img, q.0, q.1, p.0, p.1, color);
                    }
                    prev = Some(p);
                }
                None => prev = None,
            }
        }
        let ly = y1 + 6 + 12 * s as i64;
        draw_line(&mut img, x0 + 8, ly + 3, x0 + 24, ly + 3, color);
        draw_text(&mut img, x0 + 30, ly, label, color);
    }

    img.save(path)?;
    Ok(())
}
