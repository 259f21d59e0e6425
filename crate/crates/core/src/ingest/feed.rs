//! RSS 2.0 and Atom parsing, plus an RSS writer used for fixtures.

use chrono::{DateTime, Utc};
use quick_xml::escape::{escape, resolve_predefined_entity};
use quick_xml::events::{BytesStart, Event};
use quick_xml::{Reader, XmlVersion};
use serde::{Deserialize, Serialize};
use url::Url;

use super::FeedSource;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedItem {
    pub url: Url,
    pub title: String,
    pub published_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed feed: {0}")]
pub struct MalformedFeed(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dialect {
    Rss,
    Atom,
}

impl Dialect {
    fn item_tag(self) -> &'static str {
        match self {
            Dialect::Rss => "item",
            Dialect::Atom => "entry",
        }
    }
}

fn collapse(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn local_name(e: &BytesStart<'_>) -> String {
    e.local_name().as_ref().to_ascii_lowercase()
}

#[derive(Default)]
struct Partial {
    link: Option<String>,
    title: String,
    published: Option<DateTime<Utc>>,
    updated: Option<DateTime<Utc>>,
}

impl Partial {
    fn atom_link(&mut self, e: &BytesStart<'_>) -> Result<(), MalformedFeed> {
        let mut href = None;
        let mut rel = None;
        for attr in e.attributes() {
            let attr = attr.map_err(|err| MalformedFeed(err.to_string()))?;
            let value = attr.normalized_value(XmlVersion::Implicit1_0).map_err(|err| MalformedFeed(err.to_string()))?.into_owned();
            match attr.key.local_name().as_ref() {
                "href" => href = Some(value),
                "rel" => rel = Some(value),
                _ => {}
            }
        }
        if matches!(rel.as_deref(), None | Some("alternate")) && self.link.is_none() {
            self.link = href;
        }
        Ok(())
    }

    fn set_field(&mut self, dialect: Dialect, name: &str, text: &str) {
        match (dialect, name) {
            (_, "title") => self.title = collapse(text),
            (Dialect::Rss, "link") => self.link = Some(text.trim().to_string()),
            (Dialect::Rss, "pubdate") => {
                self.published = DateTime::parse_from_rfc2822(text.trim()).ok().map(|t| t.with_timezone(&Utc));
            }
            (Dialect::Atom, "published") => {
                self.published = DateTime::parse_from_rfc3339(text.trim()).ok().map(|t| t.with_timezone(&Utc));
            }
            (Dialect::Atom, "updated") => {
                self.updated = DateTime::parse_from_rfc3339(text.trim()).ok().map(|t| t.with_timezone(&Utc));
            }
            _ => {}
        }
    }

    fn finish(self, base: &Url) -> Option<FeedItem> {
        let link = self.link.filter(|l| !l.is_empty())?;
        let url = base.join(&link).ok()?;
        Some(FeedItem { url, title: self.title, published_at: self.published.or(self.updated) })
    }
}

/// Parses an RSS 2.0 or Atom document. Items without a usable link are
/// skipped; relative links resolve against the feed URL.
pub fn fetch_feed(source: &FeedSource, document: &[u8]) -> Result<Vec<FeedItem>, MalformedFeed> {
    parse_feed(&source.feed_url, document)
}

pub fn parse_feed(base: &Url, document: &[u8]) -> Result<Vec<FeedItem>, MalformedFeed> {
    let text = std::str::from_utf8(document).map_err(|e| MalformedFeed(format!("not UTF-8: {e}")))?;
    let mut reader = Reader::from_str(text);
    reader.config_mut().check_end_names = true;

    let mut dialect = None;
    let mut saw_channel = false;
    let mut stack: Vec<String> = Vec::new();
    let mut item: Option<(usize, Partial)> = None;
    let mut field: Option<String> = None;
    let mut buf = String::new();
    let mut items = Vec::new();

    loop {
        let event = reader
            .read_event()
            .map_err(|e| MalformedFeed(format!("at byte {}: {e}", reader.error_position())))?;
        match event {
            Event::Start(ref e) | Event::Empty(ref e) => {
                let empty = matches!(event, Event::Empty(_));
                let name = local_name(e);
                if stack.is_empty() {
                    if dialect.is_some() {
                        return Err(MalformedFeed("more than one root element".into()));
                    }
                    dialect = Some(match name.as_str() {
                        "rss" => Dialect::Rss,
                        "feed" => Dialect::Atom,
                        other => return Err(MalformedFeed(format!("unexpected root element <{other}>"))),
                    });
                }
                let d = dialect.expect("root seen");
                if d == Dialect::Rss && name == "channel" && stack.len() == 1 {
                    saw_channel = true;
                }
                if let Some((depth, partial)) = &mut item {
                    if stack.len() == *depth + 1 {
                        if d == Dialect::Atom && name == "link" {
                            partial.atom_link(e)?;
                        }
                        if !empty {
                            field = Some(name.clone());
                            buf.clear();
                        }
                    }
                } else if name == d.item_tag() && !empty {
                    item = Some((stack.len(), Partial::default()));
                }
                if !empty {
                    stack.push(name);
                }
            }
            Event::End(_) => {
                stack.pop();
                let d = dialect.expect("end tag after root");
                let depth = item.as_ref().map(|(depth, _)| *depth);
                if depth.is_some_and(|depth| stack.len() == depth + 1) {
                    if let (Some(name), Some((_, partial))) = (field.take(), &mut item) {
                        partial.set_field(d, &name, &buf);
                    }
                } else if depth == Some(stack.len()) {
                    let (_, partial) = item.take().expect("open item");
                    items.extend(partial.finish(base));
                }
            }
            Event::Text(t) if field.is_some() => buf.push_str(&t.xml10_content()),
            Event::CData(t) if field.is_some() => buf.push_str(&t.xml10_content()),
            Event::GeneralRef(r) => {
                let resolved = match r.resolve_char_ref().map_err(|e| MalformedFeed(e.to_string()))? {
                    Some(c) => c.to_string(),
                    None => {
                        let name = r.xml10_content();
                        resolve_predefined_entity(&name)
                            .ok_or_else(|| MalformedFeed(format!("undefined entity &{name};")))?
                            .to_string()
                    }
                };
                if field.is_some() {
                    buf.push_str(&resolved);
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if !stack.is_empty() {
        return Err(MalformedFeed(format!("document ends inside <{}>", stack.last().unwrap())));
    }
    match dialect {
        None => Err(MalformedFeed("no root element".into())),
        Some(Dialect::Rss) if !saw_channel => Err(MalformedFeed("<rss> without <channel>".into())),
        Some(_) => Ok(items),
    }
}

/// Serializes items as an RSS 2.0 document that [`parse_feed`] reads back
/// unchanged.
pub fn write_rss(channel_title: &str, channel_link: &Url, items: &[FeedItem]) -> String {
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<rss version=\"2.0\">\n<channel>\n");
    out.push_str(&format!("<title>{}</title>\n", escape(channel_title)));
    out.push_str(&format!("<link>{}</link>\n", escape(channel_link.as_str())));
    out.push_str("<description></description>\n");
    for item in items {
        out.push_str("<item>\n");
        out.push_str(&format!("  <title>{}</title>\n", escape(item.title.as_str())));
        out.push_str(&format!("  <link>{}</link>\n", escape(item.url.as_str())));
        if let Some(t) = item.published_at {
            out.push_str(&format!("  <pubDate>{}</pubDate>\n", t.to_rfc2822()));
        }
        out.push_str("</item>\n");
    }
    out.push_str("</channel>\n</rss>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> Url {
        Url::parse("https://example.com/feed.xml").unwrap()
    }

    #[test]
    fn rss_items_in_order() {
        let doc = br#"<?xml version="1.0"?>
<rss version="2.0"><channel><title>T</title>
<item><title>One &amp; only</title><link>https://example.com/1</link><pubDate>Sun, 01 Mar 2020 10:00:00 +0000</pubDate></item>
<item><title><![CDATA[Two <b>]]></title><link>/2</link></item>
<item><title>No link</title></item>
<item><title>Three</title><link>https://example.com/3</link></item>
</channel></rss>"#;
        let items = parse_feed(&base(), doc).unwrap();
        let urls: Vec<&str> = items.iter().map(|i| i.url.as_str()).collect();
        assert_eq!(urls, ["https://example.com/1", "https://example.com/2", "https://example.com/3"]);
        assert_eq!(items[0].title, "One & only");
        assert_eq!(items[1].title, "Two <b>");
        assert_eq!(items[0].published_at.unwrap().to_rfc3339(), "2020-03-01T10:00:00+00:00");
    }

    #[test]
    fn atom_entries() {
        let doc = br#"<feed xmlns="http://www.w3.org/2005/Atom"><title>A</title>
<entry><title>E1</title><link rel="self" href="https://example.com/self"/><link href="https://example.com/e1"/>
<updated>2020-03-02T00:00:00Z</updated></entry>
<entry><title>E2</title></entry></feed>"#;
        let items = parse_feed(&base(), doc).unwrap();
        assert_eq!(items.len(), 1);
        assert_eq!(items[0].url.as_str(), "https://example.com/e1");
        assert!(items[0].published_at.is_some());
    }

    #[test]
    fn empty_channel() {
        assert!(parse_feed(&base(), b"<rss><channel></channel></rss>").unwrap().is_empty());
    }

    #[test]
    fn malformed_documents() {
        for doc in [
            &b"<rss><channel><item><title>x</title>"[..],
            b"",
            b"<html><body/></html>",
            b"<rss version=\"2.0\"></rss>",
            b"<rss><channel></chanel></rss>",
        ] {
            assert!(parse_feed(&base(), doc).is_err(), "{}", String::from_utf8_lossy(doc));
        }
    }

    #[test]
    fn writer_round_trips() {
        let items = vec![
            FeedItem {
                url: Url::parse("https://example.com/a?x=1&y=2").unwrap(),
                title: "A < B & \"C\"".into(),
                published_at: Some(DateTime::parse_from_rfc3339("2021-05-06T07:08:09Z").unwrap().with_timezone(&Utc)),
            },
            FeedItem { url: Url::parse("https://example.com/b").unwrap(), title: String::new(), published_at: None },
        ];
        let doc = write_rss("Chan", &base(), &items);
        assert_eq!(parse_feed(&base(), doc.as_bytes()).unwrap(), items);
    }
}
