//! Minimal RIFF/WAVE PCM codec: 16- or 24-bit integer, mono or stereo.
//!
//! Stereo is reduced to mono by channel averaging and integer codes are
//! scaled to [-1, 1] by 2^(bits-1). The encoder exists for the synthetic
//! corpus and for round-trip tests; it always writes mono.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::dataset::{AudioClip, ClipMeta};
use crate::error::{Error, Result};

/// Decode a PCM WAV file into a mono [`AudioClip`].
///
/// The clip's metadata is parsed from the file name.
pub fn decode_wav(path: &Path) -> Result<AudioClip> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let meta = super::parse_clip_name(&path.to_string_lossy())?;
    let mut reader = BufReader::new(File::open(path)?);
    decode_wav_reader(&mut reader, meta)
}

/// Decode a PCM WAV stream with externally supplied metadata.
pub fn decode_wav_reader<R: Read>(reader: &mut R, meta: ClipMeta) -> Result<AudioClip> {
    let mut riff = [0u8; 12];
    read_exact(reader, &mut riff)?;
    if &riff[0..4] != b"RIFF" || &riff[8..12] != b"WAVE" {
        return Err(Error::Format("not a RIFF/WAVE file".into()));
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None; // (tag, channels, rate, bits)
    let mut data: Option<Vec<u8>> = None;

    loop {
        let mut head = [0u8; 8];
        match reader.read(&mut head[..1])? {
            0 => break, // clean end of chunk stream
            _ => read_exact(reader, &mut head[1..])?,
        }
        let size = u32::from_le_bytes(head[4..8].try_into().unwrap()) as usize;
        match &head[0..4] {
            b"fmt " => {
                if size < 16 {
                    return Err(Error::Format(format!("fmt chunk too short ({size} bytes)")));
                }
                let mut body = vec![0u8; size];
                read_exact(reader, &mut body)?;
                fmt = Some((
                    u16::from_le_bytes(body[0..2].try_into().unwrap()),
                    u16::from_le_bytes(body[2..4].try_into().unwrap()),
                    u32::from_le_bytes(body[4..8].try_into().unwrap()),
                    u16::from_le_bytes(body[14..16].try_into().unwrap()),
                ));
            }
            b"data" => {
                let mut body = vec![0u8; size];
                read_exact(reader, &mut body)?;
                data = Some(body);
            }
            _ => {
                // Skip unknown chunks, honouring RIFF word alignment.
                let mut skip = vec![0u8; size + (size & 1)];
                read_exact(reader, &mut skip)?;
            }
        }
        if size & 1 == 1 && matches!(&head[0..4], b"fmt " | b"data") {
            let mut pad = [0u8; 1];
            // data may legally be the last chunk with the pad byte absent
            let _ = reader.read(&mut pad)?;
        }
    }

    let (tag, channels, sample_rate, bits) =
        fmt.ok_or_else(|| Error::Format("missing fmt chunk".into()))?;
    let data = data.ok_or_else(|| Error::Format("missing data chunk".into()))?;

    if tag != 1 {
        return Err(Error::Unsupported(format!("WAV format tag {tag}, only PCM (1) handled")));
    }
    if !(1..=2).contains(&channels) {
        return Err(Error::Unsupported(format!("{channels} channels, only 1 or 2 handled")));
    }
    if bits != 16 && bits != 24 {
        return Err(Error::Unsupported(format!("{bits}-bit samples, only 16 or 24 handled")));
    }

    let bytes_per_sample = bits as usize / 8;
    let frame = bytes_per_sample * channels as usize;
    if data.len() % frame != 0 {
        return Err(Error::Format(format!(
            "data chunk of {} bytes is not a whole number of {frame}-byte frames",
            data.len()
        )));
    }
    let scale = 1.0 / f64::from(1u32 << (bits - 1));
    let n = data.len() / frame;
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let mut acc = 0.0;
        for ch in 0..channels as usize {
            let off = i * frame + ch * bytes_per_sample;
            let code = match bits {
                16 => i32::from(i16::from_le_bytes(data[off..off + 2].try_into().unwrap())),
                _ => {
                    let raw = u32::from(data[off])
                        | u32::from(data[off + 1]) << 8
                        | u32::from(data[off + 2]) << 16;
                    // sign-extend 24-bit
                    ((raw << 8) as i32) >> 8
                }
            };
            acc += f64::from(code) * scale;
        }
        samples.push(acc / f64::from(channels));
    }

    Ok(AudioClip { samples, sample_rate, meta })
}

/// Encode mono samples as a PCM WAV file (16 or 24 bit).
pub fn encode_wav(path: &Path, samples: &[f64], sample_rate: u32, bits: u16) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    encode_wav_writer(&mut writer, samples, sample_rate, bits)
}

/// Encode mono samples as a PCM WAV stream.
pub fn encode_wav_writer<W: Write>(
    writer: &mut W,
    samples: &[f64],
    sample_rate: u32,
    bits: u16,
) -> Result<()> {
    if bits != 16 && bits != 24 {
        return Err(Error::Unsupported(format!("cannot encode {bits}-bit WAV")));
    }
    let bytes_per_sample = u32::from(bits) / 8;
    let data_size = samples.len() as u32 * bytes_per_sample;

    writer.write_all(b"RIFF")?;
    writer.write_all(&(36 + data_size).to_le_bytes())?;
    writer.write_all(b"WAVE")?;
    writer.write_all(b"fmt ")?;
    writer.write_all(&16u32.to_le_bytes())?;
    writer.write_all(&1u16.to_le_bytes())?; // PCM
    writer.write_all(&1u16.to_le_bytes())?; // mono
    writer.write_all(&sample_rate.to_le_bytes())?;
    writer.write_all(&(sample_rate * bytes_per_sample).to_le_bytes())?;
    writer.write_all(&(bytes_per_sample as u16).to_le_bytes())?;
    writer.write_all(&bits.to_le_bytes())?;
    writer.write_all(b"data")?;
    writer.write_all(&data_size.to_le_bytes())?;

    let full = f64::from(1u32 << (bits - 1));
    let max_code = (1i64 << (bits - 1)) - 1;
    let min_code = -(1i64 << (bits - 1));
    for &s in samples {
        let code = (s * full).round().clamp(min_code as f64, max_code as f64) as i64;
        match bits {
            16 => writer.write_all(&(code as i16).to_le_bytes())?,
            _ => writer.write_all(&(code as i32).to_le_bytes()[0..3])?,
        }
    }
    writer.flush()?;
    Ok(())
}

fn read_exact<R: Read>(reader: &mut R, buf: &mut [u8]) -> Result<()> {
    reader
        .read_exact(buf)
        .map_err(|_| Error::Format("file truncated".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::parse_clip_name;
    use std::io::Cursor;

    fn test_meta() -> ClipMeta {
        parse_clip_name("airport-barcelona-0-0-a.wav").unwrap()
    }

    /// Hand-assemble a stereo PCM WAV in memory.
    fn raw_wav(channels: u16, bits: u16, rate: u32, frames: &[Vec<i32>]) -> Vec<u8> {
        let bps = u32::from(bits) / 8;
        let data_size = frames.len() as u32 * u32::from(channels) * bps;
        let mut out = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&(36 + data_size).to_le_bytes());
        out.extend_from_slice(b"WAVE");
        out.extend_from_slice(b"fmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&channels.to_le_bytes());
        out.extend_from_slice(&rate.to_le_bytes());
        out.extend_from_slice(&(rate * u32::from(channels) * bps).to_le_bytes());
        out.extend_from_slice(&((channels * bits / 8) as u16).to_le_bytes());
        out.extend_from_slice(&bits.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&data_size.to_le_bytes());
        for frame in frames {
            for &code in frame {
                match bits {
                    16 => out.extend_from_slice(&(code as i16).to_le_bytes()),
                    _ => out.extend_from_slice(&code.to_le_bytes()[0..3]),
                }
            }
        }
        out
    }

    #[test]
    fn full_scale_24bit_stereo() {
        let max = (1 << 23) - 1;
        let frames = vec![vec![max, max]; 8];
        let bytes = raw_wav(2, 24, 48000, &frames);
        let clip = decode_wav_reader(&mut Cursor::new(bytes), test_meta()).unwrap();
        let expected = 1.0 - (0.5f64).powi(23);
        for &s in &clip.samples {
            assert!((s - expected).abs() < 1e-12, "sample {s} vs {expected}");
        }
        assert_eq!(clip.sample_rate, 48000);
    }

    #[test]
    fn silence_16bit_mono() {
        let frames = vec![vec![0]; 1000];
        let bytes = raw_wav(1, 16, 48000, &frames);
        let clip = decode_wav_reader(&mut Cursor::new(bytes), test_meta()).unwrap();
        assert_eq!(clip.samples.len(), 1000);
        assert!(clip.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn stereo_average_cancels() {
        let half = 1 << 14; // +0.5 in 16-bit code
        let frames = vec![vec![half, -half]; 32];
        let bytes = raw_wav(2, 16, 44100, &frames);
        let clip = decode_wav_reader(&mut Cursor::new(bytes), test_meta()).unwrap();
        assert!(clip.samples.iter().all(|&s| s.abs() < 1e-12));
    }

    #[test]
    fn malformed_header_rejected() {
        let err = decode_wav_reader(&mut Cursor::new(b"RIFX....WAVE".to_vec()), test_meta())
            .unwrap_err();
        assert!(matches!(err, Error::Format(_)), "got {err:?}");
    }

    #[test]
    fn unsupported_bit_depth_rejected() {
        let bytes = raw_wav(1, 16, 48000, &[vec![0]]);
        let mut altered = bytes.clone();
        altered[34] = 8; // bits_per_sample = 8
        let err = decode_wav_reader(&mut Cursor::new(altered), test_meta()).unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)), "got {err:?}");
    }

    #[test]
    fn truncated_data_rejected() {
        let mut bytes = raw_wav(1, 16, 48000, &vec![vec![0]; 16]);
        bytes.truncate(bytes.len() - 3);
        let err = decode_wav_reader(&mut Cursor::new(bytes), test_meta()).unwrap_err();
        assert!(matches!(err, Error::Format(_)), "got {err:?}");
    }

    #[test]
    fn encode_decode_identity_up_to_quantization() {
        for &bits in &[16u16, 24] {
            let samples: Vec<f64> = (0..400)
                .map(|i| 0.9 * (i as f64 * 0.37).sin() * (i as f64 * 0.011).cos())
                .collect();
            let mut buf = Vec::new();
            encode_wav_writer(&mut buf, &samples, 48000, bits).unwrap();
            let clip = decode_wav_reader(&mut Cursor::new(buf), test_meta()).unwrap();
            let tol = (0.5f64).powi(i32::from(bits) - 1);
            for (a, b) in samples.iter().zip(&clip.samples) {
                assert!((a - b).abs() <= tol, "{a} vs {b} at {bits} bits");
            }
        }
    }
}
