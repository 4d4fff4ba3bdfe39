//! Instruction-builder goldens and invariants.

use std::path::PathBuf;

use inkuba::corpus::Language;
use inkuba::instruct::{
    merge_and_split, read_tsv_pairs, Builder, InstructionRecord, LabelMaps, MtDirection, PromptLanguage, PromptMode,
    PromptedExample, Split, SplitRatios, Task, TemplateSet,
};
use proptest::prelude::*;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

#[test]
fn three_swahili_pairs_match_golden() {
    let (t, l) = (TemplateSet::builtin(), LabelMaps::builtin());
    let pairs = read_tsv_pairs(&fixture("swa_pairs.tsv")).unwrap();
    let recs = Builder::new(&t, &l, PromptMode::Native, 0)
        .build_mt(&pairs, Language::Swa)
        .unwrap();
    let got: String = recs
        .into_iter()
        .map(|ex| serde_json::to_string(&InstructionRecord::from_example(ex, Split::Train)).unwrap() + "\n")
        .collect();
    let want = std::fs::read_to_string(fixture("swa_pairs_native.golden.jsonl")).unwrap();
    assert_eq!(got, want);
}

#[test]
fn table5_templates_render_byte_exactly() {
    let t = TemplateSet::builtin();
    let get = |task, pl, dir| t.get(task, Language::Swa, pl, dir, 1).unwrap();
    let cases = [
        (
            get(Task::Sentiment, PromptLanguage::Native, None),
            "Tafadhali tambua mawazo yaliyoonyeshwa kwenye matini haya kwa kutegemea miongozo ifuatayo: Chanya: ---, Hasi: ---, Wastani: --- X Output:",
        ),
        (
            get(Task::Mt, PromptLanguage::Native, Some(MtDirection::ToEnglish)),
            "Tafsiri zifuatazo kutoka kwa Swahili hadi English. X Output:",
        ),
        (
            get(Task::Mt, PromptLanguage::Native, Some(MtDirection::FromEnglish)),
            "Tafsiri zifuatazo kutoka kwa English hadi Swahili. X Output:",
        ),
        (
            get(Task::Sentiment, PromptLanguage::English, None),
            "Please identify the sentiment reflected in this text based on the following guidelines: Positive: ---, Negative: ---, Neutral: --- X Output:",
        ),
        (
            get(Task::Mt, PromptLanguage::English, Some(MtDirection::ToEnglish)),
            "Translate the following from Swahili into English. X Output:",
        ),
    ];
    for (template, want) in cases {
        assert_eq!(template.render("X").unwrap(), want);
    }
    assert!(cases[0].1.contains("Chanya: ---, Hasi: ---, Wastani: ---"));
}

#[test]
fn every_builtin_template_is_faithful() {
    let t = TemplateSet::builtin();
    for tpl in t.iter() {
        let inputs = "Ọjọ́ àìkú {x} ñ";
        let out = tpl.render(inputs).unwrap();
        let (pre, post) = tpl.affixes();
        assert_eq!(&out[..pre.len()], pre);
        assert_eq!(&out[out.len() - post.len()..], post);
        assert_eq!(&out[pre.len()..out.len() - post.len()], inputs);
        assert!(tpl.text.ends_with("Output:"));
    }
}

#[test]
fn label_maps_are_bijective() {
    let maps = LabelMaps::builtin();
    let mut count = 0;
    for ((task, lang), map) in maps.iter() {
        for (src, dst) in map.pairs() {
            assert_eq!(maps.map_label(*task, *lang, src).unwrap(), dst);
            assert_eq!(map.inverse(dst), Some(src));
            count += 1;
        }
    }
    assert_eq!(count, 10);
}

#[test]
fn mixed_fixture_stats_match_hand_count() {
    let (t, l) = (TemplateSet::builtin(), LabelMaps::builtin());
    let mut english = Builder::new(&t, &l, PromptMode::English, 0);
    let mut all = Vec::new();
    // 3 Swahili pairs -> 6 MT records; 2 Hausa pairs -> 4
    let pairs = read_tsv_pairs(&fixture("swa_pairs.tsv")).unwrap();
    all.extend(english.build_mt(&pairs, Language::Swa).unwrap());
    all.extend(english.build_mt(&pairs[..2], Language::Hau).unwrap());
    // 2 Swahili sentiment records
    let labeled = vec![
        ("Nzuri sana leo".to_string(), "positive".to_string()),
        ("Sipendi hii".into(), "negative".into()),
    ];
    all.extend(
        Builder::new(&t, &l, PromptMode::Native, 0)
            .build_labeled(Task::Sentiment, &labeled, Language::Swa)
            .unwrap(),
    );
    let d = merge_and_split(all, SplitRatios::default(), 4).unwrap();
    let rows = d.stats.rows();
    assert_eq!(
        rows,
        vec![
            ("Hausa", 4),
            ("Yoruba", 0),
            ("Swahili", 8),
            ("isiZulu", 0),
            ("isiXhosa", 0),
            ("English", 10)
        ]
    );
    assert_eq!(d.records.len(), 12);
    assert_eq!(d.split(Split::Train).count(), 10);
}

fn arb_examples() -> impl Strategy<Value = Vec<PromptedExample>> {
    prop::collection::vec(("[a-z ]{0,12}", 0usize..5), 0..200).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (text, lang))| PromptedExample {
                task: Task::Qa,
                language: Language::AFRICAN[lang],
                instruction: format!("{i}:{text}"),
                inputs: text.clone(),
                targets: text,
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn splits_partition_input(examples in arb_examples(), seed in any::<u64>(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (train, rest) = (a, 1.0 - a);
        let ratios = SplitRatios { train, dev: rest * b, test: rest * (1.0 - b) };
        let n = examples.len();
        let mut want: Vec<String> = examples.iter().map(|e| e.instruction.clone()).collect();
        let d = merge_and_split(examples, ratios, seed).unwrap();
        let mut got: Vec<String> = d.records.iter().map(|r| r.instruction.clone()).collect();
        want.sort();
        got.sort();
        prop_assert_eq!(got, want);
        let (tr, dv, ts) = ratios.sizes(n);
        prop_assert_eq!(d.split(Split::Train).count(), tr);
        prop_assert_eq!(d.split(Split::Dev).count(), dv);
        prop_assert_eq!(d.split(Split::Test).count(), ts);
    }

    #[test]
    fn mt_records_balanced(n in 0usize..30) {
        let (t, l) = (TemplateSet::builtin(), LabelMaps::builtin());
        let pairs: Vec<(String, String)> = (0..n).map(|i| (format!("a{i}"), format!("e{i}"))).collect();
        let recs = Builder::new(&t, &l, PromptMode::Multiple, n as u64).build_mt(&pairs, Language::Swa).unwrap();
        prop_assert_eq!(recs.len(), 2 * n);
        let to = recs.iter().filter(|r| t.infer_direction(Language::Swa, &r.instruction) == Some(MtDirection::ToEnglish)).count();
        prop_assert_eq!(to, n);
    }
}
