"""Regenerate the shipped vertical-cluster fixtures.

The cluster assignments were curated by hand for the two public benchmark
repositories. Two database ids circulate in a corrupted form in print
(`hone_1`, `partment_rentals`); the fixtures carry the real release ids
(`phone_1`, `apartment_rentals`).
"""

import json
from pathlib import Path

SPIDER_OUT = [
    ["concert_singer", "singer", "orchestra"],
    ["pets_1", "dog_kennels", "real_estate_properties", "employee_hire_evaluation"],
    ["course_teach", "student_transcripts_tracking", "network_1", "museum_visit"],
    ["voter_1", "world_1", "car_1", "wta_1", "poker_player", "battle_death"],
    ["cre_Doc_Template_Mgt"],
    ["tvshow"],
    ["flight_2"],
]

SPIDER_IN = [
    ["college_2", "college_1", "college_3", "csu_1", "dorm_1", "student_1"],
    ["student_assessment", "e_learning", "behavior_monitoring"],
    ["flight_1", "flight_4", "flight_company", "aircraft", "pilot_record"],
    ["music_2", "music_1", "music_4", "musical", "sakila_1", "chinook_1"],
    ["school_finance", "school_bus"],
    ["coffee_shop", "restaurant_1"],
    ["voter_2", "election", "candidate_poll", "election_representative",
     "county_public_safety"],
    ["driving_school", "bike_1"],
    ["baseball_1", "game_1", "university_basketball", "race_track",
     "sports_competition", "gymnast", "school_player", "swimming", "formula_1",
     "match_season", "climbing", "riding_club", "game_injury", "soccer_2",
     "soccer_1"],
    ["small_bank_1", "cre_Docs_and_Epenses", "customers_and_invoices",
     "customers_card_transactions", "insurance_policies", "insurance_fnol",
     "insurance_and_eClaims", "tracking_share_transactions", "loan_1",
     "tracking_orders", "customer_complaints", "product_catalog",
     "products_gen_characteristics", "customers_and_addresses",
     "customers_campaigns_ecommerce", "products_for_hire"],
    ["customers_and_products_contacts", "customer_deliveries",
     "document_management", "cre_Doc_Tracking_DB", "cre_Doc_Control_Systems",
     "tracking_grants_for_research", "cre_Drama_Workshop_Groups", "solvency_ii"],
    ["movie_1", "cinema", "film_rank"],
    ["local_govt_mdm", "e_government", "local_govt_and_lot",
     "local_govt_in_alabama"],
    ["workshop_paper", "scientist_1", "journal_committee", "icfp_1"],
    ["company_office", "gas_company", "culture_company", "company_employee",
     "company_1", "hospital_1", "hr_1", "department_management", "store_1",
     "department_store", "store_product", "shop_membership", "manufactory_1",
     "manufacturer", "entrepreneur"],
    ["storm_record", "station_weather"],
    ["phone_1", "phone_market", "device"],
    ["assets_maintenance", "machine_repair"],
    ["ship_1", "ship_mission"],
    ["apartment_rentals", "inn_1", "cre_Theme_park"],
    ["club_1", "activity_1", "decoration_competition"],
    ["body_builder", "wrestler"],
    ["train_station", "railway"],
    ["party_host", "party_people"],
    ["network_2", "twitter_1"],
    ["allergy_1"],
    ["medicine_enzyme_interaction"],
    ["farm"],
    ["wine_1"],
    ["debate"],
    ["architecture"],
    ["epinions_1"],
    ["city_record"],
    ["news_report"],
    ["entertainment_awards"],
    ["tracking_software_problems"],
    ["perpetrator"],
    ["book_2"],
    ["wedding"],
    ["mountain_photos"],
    ["roller_coaster"],
    ["browser_web"],
    ["protein_institute"],
    ["performance_attendance"],
    ["program_share"],
    ["theme_gallery"],
]

BIRD_IN = [
    ["book_publishing_company", "books", "authors", "citeseer"],
    ["cars"],
    ["college_completion", "computer_student", "cs_semester", "university",
     "student_loan"],
    ["movie", "movie_3", "movie_platform", "movielens", "movies_4",
     "music_platform_2", "disney"],
    ["car_retails", "retail_complains", "retail_world", "retails", "sales",
     "regional_sales", "works_cycles", "shipping"],
    ["food_inspection", "food_inspection_2"],
    ["olympics", "professional_basketball", "soccer_2016", "shooting", "hockey",
     "european_football_1", "ice_hockey_draft"],
    ["cookbook", "menu"],
    ["craftbeer", "beer_factory"],
    ["world", "world_development_indicators", "mondial_geo", "address",
     "chicago_crime", "restaurant"],
    ["sales_in_weather", "bike_share_1"],
    ["shakespeare"],
    ["law_episode", "simpson_episodes"],
    ["software_company"],
    ["airline"],
    ["app_store"],
    ["synthea"],
    ["social_media"],
    ["video_games"],
    ["superstore"],
    ["public_review_platform"],
    ["image_and_language"],
    ["talkingdata"],
    ["genes"],
    ["music_tracker"],
    ["codebase_comments"],
    ["mental_health_survey"],
    ["donor"],
    ["legislator"],
    ["language_corpus"],
    ["human_resources"],
    ["coinmarketcap"],
    ["trains"],
]

BIRD_OUT = [
    ["thrombosis_prediction"],
    ["california_schools"],
    ["card_games"],
    ["debit_card_specializing"],
    ["toxicology"],
    ["financial"],
    ["codebase_community"],
    ["european_football_2"],
    ["formula_1"],
    ["student_club"],
    ["superhero"],
]


def build(in_clusters, out_clusters):
    mapping = {}
    for i, members in enumerate(in_clusters, start=1):
        for db_id in members:
            assert db_id not in mapping, db_id
            mapping[db_id] = f"in-{i}"
    for i, members in enumerate(out_clusters, start=1):
        for db_id in members:
            assert db_id not in mapping, db_id
            mapping[db_id] = f"out-{i}"
    return mapping


def main():
    out_dir = Path(__file__).resolve().parent.parent / "src" / "dbrouter" / "data" / "clusters"
    out_dir.mkdir(parents=True, exist_ok=True)
    spider = build(SPIDER_IN, SPIDER_OUT)
    bird = build(BIRD_IN, BIRD_OUT)
    assert len([d for d in spider if spider[d].startswith("in-")]) == 140
    assert len([d for d in spider if spider[d].startswith("out-")]) == 20
    assert len([d for d in bird if bird[d].startswith("in-")]) == 69
    assert len([d for d in bird if bird[d].startswith("out-")]) == 11
    for name, mapping in (("spider.json", spider), ("bird.json", bird)):
        with open(out_dir / name, "w", encoding="utf-8") as fh:
            json.dump(mapping, fh, indent=1, sort_keys=True)
            fh.write("\n")
        print(f"wrote {name}: {len(mapping)} databases")


if __name__ == "__main__":
    main()
