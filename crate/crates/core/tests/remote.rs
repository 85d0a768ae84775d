use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread;
use std::time::Duration;

use clickseg::encoding::EncodingConfig;
use clickseg::predictors::{PredictRequest, PredictResponse, Predictor, PredictorInput, RemotePredictor};
use clickseg::{BinaryMask, Click, ColorImage, Error};

/// Serves `n` requests on a loopback port, answering each with `reply(body)`.
fn serve<F>(n: usize, reply: F) -> String
where
    F: Fn(&str) -> Option<(u16, String)> + Send + 'static,
{
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    thread::spawn(move || {
        for stream in listener.incoming().take(n) {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some((k, v)) = line.split_once(':') {
                    if k.eq_ignore_ascii_case("content-length") {
                        len = v.trim().parse().unwrap();
                    }
                }
            }
            let mut body = vec![0u8; len];
            reader.read_exact(&mut body).unwrap();
            match reply(std::str::from_utf8(&body).unwrap()) {
                Some((status, text)) => {
                    let head = format!(
                        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
                        text.len()
                    );
                    stream.write_all(head.as_bytes()).unwrap();
                    stream.write_all(text.as_bytes()).unwrap();
                }
                None => thread::sleep(Duration::from_millis(1500)),
            }
        }
    });
    format!("http://{addr}")
}

fn fixture() -> (ColorImage, Vec<Click>, BinaryMask) {
    let img = ColorImage::from_fn(6, 7, |r, c| [(r * 40) as u8, (c * 30) as u8, 7]);
    let prev = BinaryMask::from_fn(6, 7, |r, c| r < 3 && c > 2);
    (img, vec![Click::positive(1, 4), Click::negative(5, 0)], prev)
}

#[test]
fn echoes_previous_mask_through_the_wire() {
    let url = serve(1, |body| {
        let req: PredictRequest = serde_json::from_str(body).unwrap();
        assert_eq!((req.height, req.width), (6, 7));
        Some((200, serde_json::to_string(&PredictResponse { prob: req.prev }).unwrap()))
    });
    let (img, clicks, prev) = fixture();
    let input = PredictorInput::new(&img, &clicks, &prev, &EncodingConfig::default()).unwrap();
    let p = RemotePredictor::new(&url).predict(&input).unwrap();
    assert_eq!(p, prev.to_prob());
}

#[test]
fn wrong_length_response_is_a_shape_error() {
    let url = serve(1, |_| {
        let prob = clickseg::predictors::encode_f32_plane([0.5; 10]);
        Some((200, serde_json::to_string(&PredictResponse { prob }).unwrap()))
    });
    let (img, clicks, prev) = fixture();
    let input = PredictorInput::new(&img, &clicks, &prev, &EncodingConfig::default()).unwrap();
    let err = RemotePredictor::new(&url).predict(&input).unwrap_err();
    assert!(matches!(err, Error::Shape { .. }), "{err}");
}

#[test]
fn server_error_and_garbage_are_reported() {
    let url = serve(2, |body| {
        if body.contains("\"height\":6") {
            Some((500, "boom".into()))
        } else {
            Some((200, "not json".into()))
        }
    });
    let (img, clicks, prev) = fixture();
    let input = PredictorInput::new(&img, &clicks, &prev, &EncodingConfig::default()).unwrap();
    let remote = RemotePredictor::new(&url);
    match remote.predict(&input).unwrap_err() {
        Error::Transport { endpoint, message, .. } => {
            assert!(endpoint.ends_with("/predict"));
            assert!(message.contains("500"));
        }
        other => panic!("unexpected {other}"),
    }
    let img2 = ColorImage::new(2, 2, [0, 0, 0]);
    let prev2 = BinaryMask::new(2, 2);
    let clicks2 = [Click::positive(0, 0)];
    let input2 = PredictorInput::new(&img2, &clicks2, &prev2, &EncodingConfig::default()).unwrap();
    assert!(matches!(remote.predict(&input2), Err(Error::MalformedResponse(_))));
}

#[test]
fn timeout_reports_endpoint_and_elapsed() {
    let url = serve(1, |_| None);
    let (img, clicks, prev) = fixture();
    let input = PredictorInput::new(&img, &clicks, &prev, &EncodingConfig::default()).unwrap();
    let remote = RemotePredictor::with_timeout(&url, Duration::from_millis(200));
    match remote.predict(&input).unwrap_err() {
        Error::Transport { endpoint, elapsed, .. } => {
            assert_eq!(endpoint, format!("{url}/predict"));
            assert!(elapsed >= Duration::from_millis(150) && elapsed < Duration::from_secs(1));
        }
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn unreachable_endpoint_is_a_transport_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let (img, clicks, prev) = fixture();
    let input = PredictorInput::new(&img, &clicks, &prev, &EncodingConfig::default()).unwrap();
    let remote = RemotePredictor::with_timeout(&format!("http://127.0.0.1:{port}"), Duration::from_secs(2));
    assert!(matches!(remote.predict(&input), Err(Error::Transport { .. })));
}
