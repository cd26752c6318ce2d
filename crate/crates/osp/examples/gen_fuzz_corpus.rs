//! Regenerates the seed corpus under fuzz/corpus/ from representative
//! protocol messages and the shipped scenario files.

use std::fs;
use std::path::Path;

use osp::codec::{
    Addr, GossipExchange, GossipMessage, MetricType, PeerId, PeerIdentity, SaMessage,
    SfStatusElement, StMessage,
};
use osp::topology::NodeId;

fn write(dir: &Path, name: &str, bytes: &[u8]) {
    fs::create_dir_all(dir).unwrap();
    fs::write(dir.join(name), bytes).unwrap();
    println!("{}", dir.join(name).display());
}

fn main() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus");
    let pid = |b: u8| PeerId([b; 8]);
    let ident = |b: u8| PeerIdentity {
        pid: pid(b),
        addr: Addr::for_node(NodeId(b as u32)),
    };

    let wire = root.join("decode_wire");
    let exchange = GossipExchange {
        source: pid(1),
        destination: pid(2),
        source_addr: Addr::for_node(NodeId(1)),
        session_id: 0x1122_3344_5566_7788,
        metric_value: -1,
        pts: vec![ident(3), ident(4)],
    };
    write(
        &wire,
        "registration",
        &GossipMessage::Registration(exchange.clone()).encode().unwrap(),
    );
    write(
        &wire,
        "reg_response",
        &GossipMessage::RegResponse(GossipExchange {
            metric_value: 2,
            ..exchange
        })
        .encode()
        .unwrap(),
    );
    write(
        &wire,
        "ack",
        &GossipMessage::Ack {
            source: pid(1),
            destination: pid(2),
            session_id: 7,
        }
        .encode()
        .unwrap(),
    );
    write(
        &wire,
        "query_on_path",
        &StMessage::Query {
            source: pid(1),
            destination: pid(9),
            source_addr: Addr::for_node(NodeId(1)),
            destination_addr: Addr::for_node(NodeId(9)),
            session_id: 42,
            on_path: true,
            metric: MetricType::HopCount,
            radius: 3,
            sa_id: 1,
        }
        .encode()
        .unwrap(),
    );
    write(
        &wire,
        "query_off_path",
        &StMessage::Query {
            source: pid(1),
            destination: pid(5),
            source_addr: Addr::for_node(NodeId(1)),
            destination_addr: Addr::for_node(NodeId(5)),
            session_id: 42,
            on_path: false,
            metric: MetricType::HopCount,
            radius: 1,
            sa_id: 1,
        }
        .encode()
        .unwrap(),
    );
    write(
        &wire,
        "response",
        &StMessage::Response {
            source: pid(5),
            destination: pid(1),
            source_addr: Addr::for_node(NodeId(5)),
            destination_addr: Addr::for_node(NodeId(1)),
            session_id: 42,
            sa_id: 1,
        }
        .encode()
        .unwrap(),
    );
    write(
        &wire,
        "error",
        &StMessage::Error {
            source: pid(5),
            destination: pid(1),
            session_id: 42,
            source_addr: Addr::for_node(NodeId(5)),
            destination_addr: Addr::for_node(NodeId(1)),
            code: 1,
        }
        .encode()
        .unwrap(),
    );
    let probe = SaMessage::Probe {
        service_type: 1,
        payload: vec![0x5A; 16],
    };
    write(
        &wire,
        "data",
        &StMessage::Data {
            source: pid(1),
            destination: pid(5),
            source_addr: Addr::for_node(NodeId(1)),
            destination_addr: Addr::for_node(NodeId(5)),
            session_id: 42,
            sa_id: 1,
            payload: probe.encode().unwrap(),
        }
        .encode()
        .unwrap(),
    );
    let stack = SaMessage::Response {
        code: 0,
        elements: vec![
            SfStatusElement {
                node: NodeId(5),
                status: 1,
                depth: 0,
            },
            SfStatusElement {
                node: NodeId(7),
                status: 0,
                depth: 1,
            },
        ],
    };
    write(
        &wire,
        "data_response",
        &StMessage::DataResponse {
            source: pid(5),
            destination: pid(1),
            source_addr: Addr::for_node(NodeId(5)),
            destination_addr: Addr::for_node(NodeId(1)),
            session_id: 42,
            sa_id: 1,
            payload: stack.encode().unwrap(),
        }
        .encode()
        .unwrap(),
    );

    let sa = root.join("decode_sa");
    write(&sa, "probe", &probe.encode().unwrap());
    write(
        &sa,
        "setup",
        &SaMessage::Setup {
            service_type: 2,
            payload: vec![],
        }
        .encode()
        .unwrap(),
    );
    write(&sa, "response_stack", &stack.encode().unwrap());

    let scen = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let gml = root.join("parse_gml");
    for f in ["geant.gml", "abilene.gml"] {
        write(&gml, f, &fs::read(scen.join(f)).unwrap());
    }
    write(
        &gml,
        "tiny.gml",
        b"graph [\n  node [ id 0 label \"a\" ]\n  node [ id 1 label \"b\" role \"server\" ]\n  edge [ source 0 target 1 ]\n]\n",
    );

    let el = root.join("parse_edge_list");
    for f in ["line5.txt", "star5.txt"] {
        write(&el, f, &fs::read(scen.join(f)).unwrap());
    }
    write(&el, "semicolons", b"a b; b c\n");

    let sc = root.join("parse_scenario");
    for f in ["geant.toml", "abilene.toml"] {
        write(&sc, f, &fs::read(scen.join(f)).unwrap());
    }
    write(&sc, "minimal.toml", b"[topology]\nfile = \"net.gml\"\n");
}
