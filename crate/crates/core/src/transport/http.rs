//! Just enough HTTP/1.1 for one request per connection.

use std::io::{Read, Write};

use crate::{Error, Result};

const MAX_HEAD: usize = 16 * 1024;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HttpRequest {
    pub method: String,
    pub path: String,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: Vec<u8>,
}

fn frame(start_line: &str, extra: &[(&str, &str)], body: &[u8]) -> Vec<u8> {
    let mut head = format!("{start_line}\r\n");
    for (k, v) in extra {
        head.push_str(&format!("{k}: {v}\r\n"));
    }
    head.push_str(&format!(
        "Content-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        body.len()
    ));
    let mut out = head.into_bytes();
    out.extend_from_slice(body);
    out
}

pub fn frame_http_post(path: &str, host: &str, body: &[u8]) -> Vec<u8> {
    frame(&format!("POST {path} HTTP/1.1"), &[("Host", host)], body)
}

pub fn frame_http_get(path: &str, host: &str) -> Vec<u8> {
    frame(&format!("GET {path} HTTP/1.1"), &[("Host", host)], &[])
}

fn reason(status: u16) -> &'static str {
    match status {
        200 => "OK",
        400 => "Bad Request",
        404 => "Not Found",
        405 => "Method Not Allowed",
        409 => "Conflict",
        410 => "Gone",
        _ => "Error",
    }
}

pub fn frame_http_response(status: u16, body: &[u8]) -> Vec<u8> {
    frame(&format!("HTTP/1.1 {status} {}", reason(status)), &[], body)
}

fn find_head_end(bytes: &[u8]) -> Option<usize> {
    bytes.windows(4).position(|w| w == b"\r\n\r\n")
}

struct Head {
    start: String,
    headers: Vec<(String, String)>,
    content_length: usize,
    body_start: usize,
}

fn parse_head(bytes: &[u8]) -> Result<Head> {
    let end = find_head_end(bytes).ok_or_else(|| Error::protocol("incomplete HTTP head"))?;
    let text = std::str::from_utf8(&bytes[..end]).map_err(|_| Error::protocol("HTTP head is not UTF-8"))?;
    let mut lines = text.split("\r\n");
    let start = lines.next().unwrap_or_default().to_owned();
    let mut headers = Vec::new();
    let mut content_length = None;
    for line in lines {
        let (k, v) = line
            .split_once(':')
            .ok_or_else(|| Error::protocol(format!("malformed header line {line:?}")))?;
        let (k, v) = (k.trim().to_owned(), v.trim().to_owned());
        if k.eq_ignore_ascii_case("content-length") {
            let n: usize = v.parse().map_err(|_| Error::protocol(format!("bad Content-Length {v:?}")))?;
            if content_length.is_some_and(|old| old != n) {
                return Err(Error::protocol("conflicting Content-Length headers"));
            }
            content_length = Some(n);
        }
        headers.push((k, v));
    }
    let content_length = content_length.ok_or_else(|| Error::protocol("missing Content-Length"))?;
    Ok(Head {
        start,
        headers,
        content_length,
        body_start: end + 4,
    })
}

fn take_body(bytes: &[u8], head: &Head) -> Result<Vec<u8>> {
    let body = &bytes[head.body_start..];
    if body.len() != head.content_length {
        return Err(Error::protocol(format!(
            "body has {} bytes, Content-Length says {}",
            body.len(),
            head.content_length
        )));
    }
    Ok(body.to_vec())
}

pub fn parse_http_request(bytes: &[u8]) -> Result<HttpRequest> {
    let head = parse_head(bytes)?;
    let mut parts = head.start.split(' ');
    let (method, path, version) = (parts.next(), parts.next(), parts.next());
    match (method, path, version, parts.next()) {
        (Some(m), Some(p), Some("HTTP/1.1"), None) if !m.is_empty() && p.starts_with('/') => {
            Ok(HttpRequest {
                method: m.to_owned(),
                path: p.to_owned(),
                body: take_body(bytes, &head)?,
                headers: head.headers,
            })
        }
        _ => Err(Error::protocol(format!("bad request line {:?}", head.start))),
    }
}

/// Splits a request into `(path, body)`.
pub fn parse_http(bytes: &[u8]) -> Result<(String, Vec<u8>)> {
    let r = parse_http_request(bytes)?;
    Ok((r.path, r.body))
}

pub fn parse_http_response(bytes: &[u8]) -> Result<HttpResponse> {
    let head = parse_head(bytes)?;
    let status = head
        .start
        .strip_prefix("HTTP/1.1 ")
        .and_then(|s| s.get(..3))
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::protocol(format!("bad status line {:?}", head.start)))?;
    Ok(HttpResponse {
        status,
        body: take_body(bytes, &head)?,
    })
}

/// Reads exactly one framed message (head plus Content-Length body).
pub fn read_message(stream: &mut impl Read) -> Result<Vec<u8>> {
    let mut buf = Vec::with_capacity(4096);
    let mut chunk = [0u8; 8192];
    let head = loop {
        if find_head_end(&buf).is_some() {
            break parse_head(&buf)?;
        }
        if buf.len() > MAX_HEAD {
            return Err(Error::protocol("HTTP head too large"));
        }
        let n = stream.read(&mut chunk)?;
        if n == 0 {
            return Err(Error::protocol("connection closed before end of HTTP head"));
        }
        buf.extend_from_slice(&chunk[..n]);
    };
    let total = head.body_start + head.content_length;
    while buf.len() < total {
        let n = stream.read(&mut chunk)?;
        if n == 0 {
            return Err(Error::protocol("connection closed mid-body"));
        }
        buf.extend_from_slice(&chunk[..n]);
    }
    buf.truncate(total);
    Ok(buf)
}

pub fn write_message(stream: &mut impl Write, bytes: &[u8]) -> Result<()> {
    stream.write_all(bytes)?;
    stream.flush()?;
    Ok(())
}
